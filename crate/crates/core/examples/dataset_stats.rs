//! Loads every bundled corpus, prints its statistics row and the
//! leave-one-out split it yields.
//!
//!     cargo run --example dataset_stats

use std::path::PathBuf;

use toolrec::corpus::{dataset_stats, load_dataset, DatasetPaths, DEFAULT_POSITIVE_THRESHOLD};
use toolrec::pipeline::prepare;
use toolrec::synthetic::FIXTURES;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for shape in FIXTURES {
        let ds = load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &root.join(shape.name)))?;
        let stats = dataset_stats(&ds.interactions)?;
        println!("{}", stats.table_row(shape.name));

        let prepared = prepare(&ds, DEFAULT_POSITIVE_THRESHOLD, 7)?;
        let tests = prepared.split.test_cases().count();
        let vals = prepared.split.validation_cases().count();
        println!(
            "    split: {tests} test / {vals} validation cases, {} users skipped, {} candidate sets",
            prepared.split.skipped.len(),
            prepared.candidates.len()
        );
    }

    // One candidate set up close.
    let shape = &FIXTURES[0];
    let ds = load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &root.join(shape.name)))?;
    let prepared = prepare(&ds, DEFAULT_POSITIVE_THRESHOLD, 7)?;
    let set = &prepared.candidates[0];
    println!("\n{}: gold {} among", shape.name, set.gold());
    for item in &set.candidates {
        println!("  {item}  {}", ds.catalog.title(item));
    }
    Ok(())
}
