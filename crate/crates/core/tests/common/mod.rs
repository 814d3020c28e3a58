#![allow(dead_code)]

use std::path::PathBuf;

use serde_json::json;
use toolrec::agent::{Outcome, Step, Trajectory};
use toolrec::corpus::{load_dataset, Dataset, DatasetPaths};
use toolrec::policy::{Action, FinalRanking};
use toolrec::synthetic::FIXTURES;
use toolrec::toolbox::{Observation, ToolCall};
use toolrec::ItemId;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Loads a bundled fixture the way `ingest` does.
pub fn load_fixture(name: &str) -> Dataset {
    let shape = FIXTURES.iter().find(|f| f.name == name).expect("known fixture");
    let dir = fixtures_dir().join(name);
    load_dataset(shape.format, &DatasetPaths::in_dir(shape.format, &dir)).expect("fixture loads")
}

pub fn ids(n: usize) -> Vec<ItemId> {
    (0..n).map(|i| ItemId::new(format!("i{i}"))).collect()
}

/// Hand-built trajectory over `i0..i9` with gold `i0`: `tools` profile calls,
/// then (for `Ranked`) an answer placing the gold at `gold_rank`.
pub fn crafted(outcome: Outcome, tools: usize, gold_rank: usize) -> Trajectory {
    let candidates = ids(10);
    let mut steps: Vec<Step> = (0..tools)
        .map(|t| Step {
            t,
            reasoning: "look".into(),
            action: Action::ToolCall(ToolCall::new("user_profile_search", json!({}))),
            observation: Some(Observation::success("user_profile_search", format!("profile {t}"))),
            raw: format!("turn {t}"),
        })
        .collect();
    let mut final_ranking = None;
    if outcome == Outcome::Ranked {
        let mut order: Vec<ItemId> = candidates[1..].to_vec();
        order.insert(gold_rank - 1, candidates[0].clone());
        let ranking = FinalRanking(order);
        final_ranking = Some(ranking.clone());
        steps.push(Step {
            t: tools,
            reasoning: "rank".into(),
            action: Action::Rank { ranking },
            observation: None,
            raw: "answer".into(),
        });
    }
    Trajectory {
        case_id: format!("c{tools}-{gold_rank}-{outcome}"),
        user: "u".into(),
        candidates: candidates.clone(),
        gold: candidates[0].clone(),
        seed: 0,
        repeat: 0,
        policy: "crafted".into(),
        outcome,
        steps,
        n_tool_calls: tools,
        final_ranking,
        rejected_turn: (outcome == Outcome::FormatError).then(|| "oops".to_string()),
        error: None,
        prompt: vec![],
    }
}

/// 1/log2(1+r) for each rank, straight from the definition of DCG with a
/// single relevant item (IDCG = 1).
pub fn brute_ndcg(order: &[ItemId], gold: &ItemId, k: usize) -> f64 {
    let rel: Vec<f64> = order.iter().map(|i| if i == gold { 1.0 } else { 0.0 }).collect();
    let dcg: f64 = rel.iter().take(k).enumerate().map(|(p, r)| r / (p as f64 + 2.0).log2()).sum();
    let mut ideal = rel.clone();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(p, r)| r / (p as f64 + 2.0).log2()).sum();
    dcg / idcg
}
