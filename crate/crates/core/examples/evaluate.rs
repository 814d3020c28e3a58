//! Scores the oracle and random policies on the sparse CDs test split and
//! prints the metrics and tool-usage tables.
//!
//!     cargo run --release --example evaluate [-- <repeats>]

use toolrec::agent::BatchConfig;
use toolrec::corpus::{load_dataset, DatasetPaths, SplitRole};
use toolrec::evaluation::{evaluate, render_metrics_table, render_usage_table, tool_usage_stats};
use toolrec::pipeline::{gold_map, World};
use toolrec::policy::{OraclePolicy, RandomPolicy};
use toolrec::synthetic::FIXTURES;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let repeats: u32 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let shape = FIXTURES.iter().find(|f| f.name == "cds_sparse").expect("bundled fixture");
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(shape.name);
    let world = World::offline(load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &dir))?, 7)?;
    let cases = world.cases(SplitRole::Test);
    let batch = BatchConfig {
        parallelism: 4,
        seed: 7,
        ..BatchConfig::default()
    };

    let (oracle, _) = evaluate(&OraclePolicy::new(gold_map(&cases)), &world.toolbox, &cases, 1, &batch)?;
    let mut reports = vec![oracle];
    let mut all = Vec::new();
    for tool_calls in [1, 4] {
        let (report, trajs) = evaluate(&RandomPolicy { tool_calls }, &world.toolbox, &cases, repeats, &batch)?;
        reports.push(report);
        all.extend(trajs);
    }
    print!("{}", render_metrics_table(&reports));
    println!("\nrandom-policy tool usage over {} episodes:", all.len());
    print!("{}", render_usage_table(&tool_usage_stats(&all)?));
    Ok(())
}
