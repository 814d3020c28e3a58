//! Walks one GRPO group: eight rollouts of a case, their rewards, the
//! group-standardized advantages and the clipped surrogate loss.
//!
//!     cargo run --example rewards_grpo

use toolrec::agent::{run_batch, BatchConfig};
use toolrec::corpus::{load_dataset, DatasetPaths, SplitRole};
use toolrec::learning::{
    combined_reward, group_advantages, grpo_surrogate, reward_tool, RewardWeights, ADVANTAGE_STD_FLOOR,
};
use toolrec::pipeline::World;
use toolrec::policy::RandomPolicy;
use toolrec::synthetic::FIXTURES;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("tool-use reward:");
    for n in [0, 1, 2, 3, 8, 9, 10, 12, 13, 16] {
        println!("  n={n:>2}  {:+.4}", reward_tool(n)?);
    }

    let shape = FIXTURES.iter().find(|f| f.name == "mini").expect("bundled fixture");
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini");
    let world = World::offline(load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &dir))?, 7)?;
    let case = world.cases(SplitRole::Validation).remove(0);
    let batch = BatchConfig {
        repeats: 8,
        ..BatchConfig::default()
    };
    let weights = RewardWeights::default();
    let max_turns = batch.limits.max_turns;

    // Rollouts with 0..=7 tool calls so the group has spread.
    let mut group = Vec::new();
    for calls in 0..8 {
        let rollout = run_batch(&RandomPolicy { tool_calls: calls }, &world.toolbox, std::slice::from_ref(&case), &BatchConfig {
            repeats: 1,
            first_repeat: calls as u32,
            ..batch
        })?;
        group.extend(rollout);
    }
    let rewards: Vec<f64> = group.iter().map(|t| combined_reward(t, weights, max_turns).combined).collect();
    let adv = group_advantages(&rewards, ADVANTAGE_STD_FLOOR)?;
    println!("\n{} (gold {}): mean {:.4}, std {:.4}", case.case_id(), case.split.held_out, adv.mean, adv.std);
    println!("  calls  rank  reward   advantage");
    for ((t, r), a) in group.iter().zip(&rewards).zip(&adv.advantages) {
        let rank = t.rank_of_gold().map_or("-".into(), |r| r.to_string());
        println!("  {:>5}  {rank:>4}  {r:+.4}  {a:+.4}", t.n_tool_calls);
    }

    // Pretend the updated policy shifted each ratio a little.
    let ratios: Vec<f64> = (0..group.len()).map(|i| 0.85 + 0.05 * i as f64).collect();
    let kl = vec![0.01; group.len()];
    for eps in [0.1, 0.2, 0.5] {
        println!("surrogate (clip {eps}, beta 0.04): {:+.6}", grpo_surrogate(&ratios, &adv.advantages, eps, &kl, 0.04)?);
    }
    Ok(())
}
