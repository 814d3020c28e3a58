//! Selects RL cases by rollout success rate. A mixture policy succeeds on a
//! chosen number of the eight rollouts of each case, so the band filter can be
//! checked by eye.
//!
//!     cargo run --example rl_sampling

use std::collections::HashSet;

use toolrec::agent::BatchConfig;
use toolrec::corpus::{load_dataset, DatasetPaths, SplitRole};
use toolrec::learning::{sample_rl_cases, RlConfig};
use toolrec::pipeline::{gold_map, World};
use toolrec::policy::{MixturePolicy, OraclePolicy};
use toolrec::synthetic::FIXTURES;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let shape = FIXTURES.iter().find(|f| f.name == "mini").expect("bundled fixture");
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini");
    let world = World::offline(load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &dir))?, 7)?;
    let cases: Vec<_> = world.cases(SplitRole::Validation).into_iter().take(9).collect();

    let rl = RlConfig::default();
    let quotas: Vec<(String, u32)> = cases.iter().enumerate().map(|(i, c)| (c.case_id(), i as u32)).collect();
    let policy = MixturePolicy::new(OraclePolicy::new(gold_map(&cases)), quotas.clone());
    let sel = sample_rl_cases(&policy, &world.toolbox, &cases, &HashSet::new(), &rl, &BatchConfig::default())?;

    println!("band ({}, {}], {} rollouts per case", rl.band.lo, rl.band.hi, rl.rollouts);
    for (id, s) in &quotas {
        let kept = sel.selected.iter().any(|c| &c.case_id == id);
        println!("  {id:<14} {s}/{}  {}", rl.rollouts, if kept { "selected" } else { "-" });
    }
    for rec in &sel.records {
        let rewards: Vec<String> = rec.rollouts.iter().map(|r| format!("{:+.2}", r.reward_breakdown.combined)).collect();
        println!("{} rewards: {}", rec.case_id, rewards.join(" "));
    }
    Ok(())
}
