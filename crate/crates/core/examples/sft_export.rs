//! Generates validation rollouts, keeps the ones that ranked the gold item
//! first, and writes them as masked SFT samples.
//!
//!     cargo run --example sft_export [-- <out.jsonl>]

use std::path::PathBuf;

use toolrec::agent::{run_batch, BatchConfig};
use toolrec::corpus::{load_dataset, DatasetPaths, SplitRole};
use toolrec::learning::{assemble_sft_sample, filter_sft, SftSample};
use toolrec::pipeline::World;
use toolrec::policy::RandomPolicy;
use toolrec::synthetic::FIXTURES;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("toolrec_sft.jsonl"));
    let shape = FIXTURES.iter().find(|f| f.name == "mini").expect("bundled fixture");
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini");
    let world = World::offline(load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &dir))?, 7)?;
    let cases = world.cases(SplitRole::Validation);
    let batch = BatchConfig {
        repeats: 10,
        parallelism: 4,
        ..BatchConfig::default()
    };

    let trajs = run_batch(&RandomPolicy { tool_calls: 2 }, &world.toolbox, &cases, &batch)?;
    let kept = filter_sft(&trajs, batch.limits.max_turns);
    let samples = kept.iter().map(assemble_sft_sample).collect::<Result<Vec<_>, _>>()?;
    toolrec::jsonl::write(&out, &samples)?;
    println!("{} rollouts, {} kept, written to {}", trajs.len(), samples.len(), out.display());

    let back: Vec<SftSample> = toolrec::jsonl::read(&out)?;
    assert_eq!(back, samples);
    if let Some(s) = back.first() {
        println!("\n{}: {} segments, mask {:?}", s.case_id, s.segments.len(), s.mask);
        for (seg, m) in s.segments.iter().zip(&s.mask) {
            let text: String = seg.text.chars().take(100).collect();
            println!("  [{m}] {}", text.replace('\n', " "));
        }
    }
    Ok(())
}
