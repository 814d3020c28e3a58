//! Drives an episode through the chat-completions client against a local
//! stand-in server that scripts the assistant's turns. Point `base_url` at a
//! real OpenAI-compatible endpoint to run a served model instead.
//!
//!     cargo run --example chat_policy

use std::sync::Arc;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use toolrec::agent::{run_episode, EpisodeLimits};
use toolrec::corpus::{load_dataset, DatasetPaths, SplitRole};
use toolrec::learning::{combined_reward, RewardWeights};
use toolrec::pipeline::World;
use toolrec::policy::{ChatPolicy, ChatPolicyConfig, SamplingParams};
use toolrec::retry::RetryPolicy;
use toolrec::synthetic::FIXTURES;
use toolrec::ItemId;

/// Profile, then history, then a ranking with `order`.
async fn completions(State(order): State<Arc<Vec<ItemId>>>, Json(body): Json<Value>) -> Json<Value> {
    let turn = body["messages"]
        .as_array()
        .map_or(0, |m| m.iter().filter(|m| m["role"] == "assistant").count());
    let content = match turn {
        0 => "<think>Start from the profile.</think>\n<tool_call>{\"name\": \"user_profile_search\", \"arguments\": {}}</tool_call>".to_owned(),
        1 => "<think>Now the latest purchases.</think>\n<tool_call>{\"name\": \"user_history_search\", \"arguments\": {\"m\": 1}}</tool_call>".to_owned(),
        _ => format!("<think>Ranking.</think>\n<answer>{}</answer>", serde_json::to_string(&*order).unwrap()),
    };
    Json(json!({"choices": [{"message": {"role": "assistant", "content": content}}]}))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let shape = FIXTURES.iter().find(|f| f.name == "mini").expect("bundled fixture");
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini");
    let world = World::offline(load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &dir))?, 7)?;
    let case = world.cases(SplitRole::Test).remove(0);
    let mut order = case.candidates.candidates.clone();
    order.retain(|i| *i != case.split.held_out);
    order.insert(1, case.split.held_out.clone());

    let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(Arc::new(order));
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().expect("runtime");
        rt.block_on(async {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            axum::serve(listener, app).await.expect("mock server");
        });
    });

    let policy = ChatPolicy::new(ChatPolicyConfig {
        base_url: format!("http://{addr}/v1"),
        model: "scripted".into(),
        api_key_env: None,
        timeout_secs: 10,
        retry: RetryPolicy::none(),
        ..ChatPolicyConfig::default()
    })?;
    let limits = EpisodeLimits::default();
    let t = run_episode(&policy, &world.toolbox, &case, &limits, &SamplingParams::default(), 7, 0);
    println!("{}", t.transcript());
    let r = combined_reward(&t, RewardWeights::default(), limits.max_turns);
    println!(
        "---- {} in {} turns, gold at {:?}, reward {:.4} (acc {:.4}, tool {:.4})",
        t.outcome.as_str(),
        t.steps.len(),
        t.rank_of_gold(),
        r.combined,
        r.r_acc,
        r.r_tool
    );
    Ok(())
}
