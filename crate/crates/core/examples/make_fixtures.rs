//! Regenerates the bundled fixtures under `fixtures/`.
//!
//!     cargo run --example make_fixtures [-- <dir>]
//!
//! Writes the four table-shaped subsets, the 20-user `mini` corpus with a
//! run config for it, and a reward-check trajectory (five tool calls, gold
//! ranked first).

use std::fs;
use std::path::PathBuf;

use serde_json::json;
use toolrec::agent::{run_episode, EpisodeLimits};
use toolrec::corpus::{dataset_stats, SplitRole};
use toolrec::pipeline::World;
use toolrec::policy::{render_step, Action, FinalRanking, FnPolicy, ParsedStep, SamplingParams};
use toolrec::synthetic::{generate, FIXTURES};
use toolrec::toolbox::ToolCall;

const MINI_RUN: &str = r#"# Scripted end-to-end run over the 20-user fixture.
seed = 7
out_dir = "target/runs/mini"
parallelism = 4

[dataset]
format = "amazon"
dir = "."

[policy]
kind = "random"
random_tool_calls = 3

[generation]
split = "validation"
repeats = 2

[evaluation]
split = "test"
repeats = 2
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));

    for shape in FIXTURES {
        let corpus = generate(&shape.config())?;
        let dir = root.join(shape.name);
        corpus.write(&dir)?;
        let stats = dataset_stats(&corpus.to_dataset()?.interactions)?;
        println!("{}", stats.table_row(shape.name));
    }
    let mini = root.join("mini");
    fs::write(mini.join("run.toml"), MINI_RUN)?;

    // Five profile/history calls, then the gold item first.
    let shape = FIXTURES.iter().find(|f| f.name == "mini").expect("mini fixture");
    let world = World::synthetic(&shape.config())?;
    let case = world.cases(SplitRole::Test).remove(0);
    let gold = case.split.held_out.clone();
    let mut order = case.candidates.candidates.clone();
    order.retain(|i| *i != gold);
    order.insert(0, gold);
    let answer = render_step(&ParsedStep {
        reasoning: "Enough evidence; ranking now.".into(),
        action: Action::Rank {
            ranking: FinalRanking(order),
        },
    })?;
    let policy = FnPolicy::new("five-calls", move |req| {
        let t = req.turn();
        if t < 5 {
            let call = if t % 2 == 0 {
                ToolCall::new("user_profile_search", json!({}))
            } else {
                ToolCall::new("user_history_search", json!({"m": t / 2 + 1}))
            };
            Ok(render_step(&ParsedStep {
                reasoning: format!("Step {t}: gather more context."),
                action: Action::ToolCall(call),
            })
            .expect("plain reasoning renders"))
        } else {
            Ok(answer.clone())
        }
    });
    let traj = run_episode(&policy, &world.toolbox, &case, &EpisodeLimits::default(), &SamplingParams::default(), 1, 0);
    assert_eq!((traj.n_tool_calls, traj.rank_of_gold()), (5, Some(1)));
    let out = root.join("reward_check");
    toolrec::jsonl::write(&out.join("trajectory.jsonl"), [&traj])?;
    println!("wrote {}", root.display());
    Ok(())
}
