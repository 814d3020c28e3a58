//! Calls every tool once for a test user, the way the agent sees them, plus
//! two calls the dispatcher rejects.
//!
//!     cargo run --example tools

use serde_json::json;
use toolrec::corpus::{load_dataset, DatasetPaths, SplitRole};
use toolrec::pipeline::World;
use toolrec::synthetic::FIXTURES;
use toolrec::toolbox::{ToolCall, ToolContext};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let shape = FIXTURES.iter().find(|f| f.name == "mini").expect("bundled fixture");
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini");
    let world = World::offline(load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &dir))?, 7)?;
    let case = world.cases(SplitRole::Test).remove(0);
    let ctx = ToolContext {
        user: case.split.user.clone(),
        history: case.split.train_prefix.clone(),
        held_out: Some(case.split.held_out.clone()),
        seed: 1,
    };
    let some_item = case.split.train_prefix.item_ids().last().expect("non-empty prefix").clone();

    for spec in world.toolbox.registry().specs() {
        println!("# {}: {}", spec.name.as_str(), spec.description);
    }
    let calls = [
        ToolCall::new("user_profile_search", json!({})),
        ToolCall::new("user_history_search", json!({"m": 1, "k": 4})),
        ToolCall::new("item_info_search", json!({"item_id": some_item.as_str(), "top_k": 3})),
        ToolCall::new("similar_users_search", json!({"k": 2})),
        ToolCall::new("knowledge_graph_search", json!({"k1": 1, "k2": 2})),
        ToolCall::new("item_info_search", json!({"item_id": case.split.held_out.as_str()})),
        ToolCall::new("weather_search", json!({})),
    ];
    for call in &calls {
        let obs = world.toolbox.dispatch(call, Some(&ctx));
        println!("\n>>> {} {}", call.name, serde_json::Value::Object(call.arguments.clone()));
        match &obs.error {
            Some(e) => println!("error: {e}"),
            None => println!("{}", obs.payload),
        }
    }
    Ok(())
}
