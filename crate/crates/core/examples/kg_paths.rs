//! Samples knowledge-graph evidence for one user of each catalog type:
//! purchase paths on the CDs corpus, demographic paths on MovieLens.
//!
//!     cargo run --example kg_paths

use std::collections::HashSet;

use toolrec::corpus::{load_dataset, DatasetPaths};
use toolrec::graphs::sample_kg_evidence;
use toolrec::pipeline::World;
use toolrec::synthetic::FIXTURES;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for name in ["cds_sparse", "ml_sparse"] {
        let shape = FIXTURES.iter().find(|f| f.name == name).expect("bundled fixture");
        let ds = load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &root.join(name)))?;
        let world = World::offline(ds, 7)?;
        let kg = &world.toolbox.indexes().kg;
        println!("{name}: {} nodes, {} edges", kg.node_count(), kg.edge_count());

        let user = world.toolbox.indexes().histories.keys().next().expect("non-empty corpus");
        let evidence = sample_kg_evidence(kg, user, 2, 3, 11, &HashSet::new())?;
        for (path, text) in evidence.paths.iter().zip(&evidence.explanations) {
            println!("  {}-hop  {text}", path.hops());
        }
        println!("  reached: {:?}\n", evidence.terminal_users());
    }
    Ok(())
}
