//! Ranks neighbours of one user under sparse, hybrid and dense similarity.
//!
//!     cargo run --example user_similarity [-- <k>]

use std::path::PathBuf;

use toolrec::corpus::{load_dataset, DatasetPaths};
use toolrec::pipeline::World;
use toolrec::synthetic::FIXTURES;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let shape = FIXTURES.iter().find(|f| f.name == "ml_dense").expect("bundled fixture");
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(shape.name);
    let world = World::offline(load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &dir))?, 7)?;
    let sim = &world.toolbox.indexes().similarity;
    let user = world.toolbox.indexes().histories.keys().next().expect("non-empty corpus");
    println!("{} users indexed with {}", sim.len(), sim.provider_tag());

    for alpha in [0.0, 0.5, 1.0] {
        println!("\nalpha = {alpha}");
        for (v, score) in sim.top_similar_users(user, k, alpha)? {
            println!(
                "  {v}  {score:.4}  (sparse {:.4}, dense {:.4})",
                sim.sparse(user, &v)?,
                sim.dense(user, &v)?
            );
        }
    }
    Ok(())
}
