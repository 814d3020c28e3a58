//! Builds the item relation graph over the dense CDs corpus and prints the
//! strongest neighbours of a few items.
//!
//!     cargo run --example item_graph [-- <k>]

use std::path::PathBuf;

use toolrec::corpus::{load_dataset, DatasetPaths, DEFAULT_POSITIVE_THRESHOLD};
use toolrec::graphs::relation_weight;
use toolrec::pipeline::prepare;
use toolrec::synthetic::FIXTURES;
use toolrec::toolbox::build_graphs;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let shape = FIXTURES.iter().find(|f| f.name == "cds_dense").expect("bundled fixture");
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(shape.name);
    let ds = load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &dir))?;
    let prepared = prepare(&ds, DEFAULT_POSITIVE_THRESHOLD, 7)?;

    let (graph, report, _) = build_graphs(&ds.catalog, &ds.demographics, &prepared.training_histories());
    println!("{report:?}");

    for item in graph.items().take(3) {
        println!("\n{item}  {}", ds.catalog.title(item));
        for r in graph.related_items(item, k)? {
            let labels: Vec<String> = r
                .relations
                .iter()
                .map(|rel| format!("{}={}", rel.label(), relation_weight(rel)))
                .collect();
            println!("  {:>2}  {}  [{}]", r.score, r.item, labels.join(" "));
        }
    }
    Ok(())
}
