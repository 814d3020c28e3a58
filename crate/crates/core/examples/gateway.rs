//! Serves the mini corpus's tools over HTTP on an ephemeral port and queries
//! them with the blocking client.
//!
//!     cargo run --example gateway

use std::sync::Arc;

use serde_json::json;
use toolrec::corpus::{load_dataset, DatasetPaths};
use toolrec::gateway::{serve, GatewayConfig, ToolClient, ToolRequest};
use toolrec::pipeline::World;
use toolrec::retry::RetryPolicy;
use toolrec::synthetic::FIXTURES;
use toolrec::toolbox::ToolCall;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let shape = FIXTURES.iter().find(|f| f.name == "mini").expect("bundled fixture");
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini");
    let world = World::offline(load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &dir))?, 7)?;
    let user = world.toolbox.indexes().histories.keys().next().expect("users").to_string();

    let handle = serve(
        Arc::new(world.toolbox),
        &GatewayConfig {
            bind: "127.0.0.1:0".into(),
            token_env: None,
            ..GatewayConfig::default()
        },
    )?;
    println!("serving on {}", handle.base_url());
    let client = ToolClient::new(handle.base_url(), None, RetryPolicy::none())?;
    println!("health: {}", client.health()?);

    let calls = [
        ToolCall::new("user_profile_search", json!({"user_id": user})),
        ToolCall::new("similar_users_search", json!({"user_id": user, "k": 2})),
        // No active task over HTTP, so this one is rejected.
        ToolCall::new("user_history_search", json!({"m": 1})),
    ];
    for (i, call) in calls.iter().enumerate() {
        let resp = client.call(&ToolRequest::new(format!("req-{i}"), call))?;
        println!("\n[{}] {} ok={}", resp.request_id, call.name, resp.ok);
        println!("{}", resp.error.as_deref().unwrap_or(&resp.payload));
    }
    handle.shutdown();
    Ok(())
}
