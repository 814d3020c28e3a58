//! Runs one test case with the oracle and a random policy and prints both
//! transcripts with their scores.
//!
//!     cargo run --example episode [-- <case-index>]

use toolrec::agent::{run_episode, EpisodeLimits};
use toolrec::corpus::{load_dataset, DatasetPaths, SplitRole};
use toolrec::evaluation::ndcg_at_k;
use toolrec::pipeline::{gold_map, World};
use toolrec::policy::{OraclePolicy, Policy, RandomPolicy, SamplingParams};
use toolrec::synthetic::FIXTURES;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let index: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let shape = FIXTURES.iter().find(|f| f.name == "mini").expect("bundled fixture");
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini");
    let world = World::offline(load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &dir))?, 7)?;
    let cases = world.cases(SplitRole::Test);
    let case = cases.get(index).ok_or("case index out of range")?;

    let oracle = OraclePolicy::new(gold_map(&cases));
    let random = RandomPolicy { tool_calls: 3 };
    let policies: [&dyn Policy; 2] = [&oracle, &random];
    for policy in policies {
        let t = run_episode(policy, &world.toolbox, case, &EpisodeLimits::default(), &SamplingParams::default(), 7, 0);
        println!("==== {} on {} (gold {})", policy.name(), t.case_id, t.gold);
        println!("{}", t.transcript());
        let ndcg = match &t.final_ranking {
            Some(r) => ndcg_at_k(r, &t.gold, 10)?,
            None => 0.0,
        };
        println!(
            "---- outcome {}, {} tool calls, gold at {:?}, NDCG@10 {ndcg:.4}\n",
            t.outcome.as_str(),
            t.n_tool_calls,
            t.rank_of_gold()
        );
    }
    Ok(())
}
