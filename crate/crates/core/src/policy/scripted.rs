//! Deterministic stand-ins for a model. Each is a pure function of the
//! request (messages, seed and episode facts).

use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;

use crate::agent::Trajectory;
use crate::ids::ItemId;
use crate::seed;
use crate::toolbox::ToolCall;

use super::grammar::{render_step, Action, FinalRanking, ParsedStep};
use super::{CompletionRequest, Message, Policy, PolicyError};

fn render(reasoning: &str, action: Action) -> String {
    render_step(&ParsedStep {
        reasoning: reasoning.to_owned(),
        action,
    })
    .expect("scripted reasoning has no tags")
}

fn tool(name: &str, args: serde_json::Value) -> Action {
    Action::ToolCall(ToolCall::new(name, args))
}

fn rank(ids: Vec<ItemId>) -> Action {
    Action::Rank {
        ranking: FinalRanking(ids),
    }
}

/// Candidates with `gold` moved to the front (or the back).
fn with_gold(candidates: &[ItemId], gold: &ItemId, first: bool) -> Vec<ItemId> {
    let mut rest: Vec<ItemId> = candidates.iter().filter(|c| *c != gold).cloned().collect();
    if first {
        rest.insert(0, gold.clone());
    } else {
        rest.push(gold.clone());
    }
    rest
}

/// Calls the profile and history tools, then ranks the gold item first.
#[derive(Debug, Clone, Default)]
pub struct OraclePolicy {
    gold: HashMap<String, ItemId>,
}

impl OraclePolicy {
    pub fn new(gold: impl IntoIterator<Item = (String, ItemId)>) -> Self {
        OraclePolicy {
            gold: gold.into_iter().collect(),
        }
    }

    fn script(&self, req: &CompletionRequest<'_>, gold_first: bool) -> Result<String, PolicyError> {
        let gold = self
            .gold
            .get(&req.meta.case_id)
            .ok_or_else(|| PolicyError::Other(format!("no gold item known for case {}", req.meta.case_id)))?;
        Ok(match req.turn() {
            0 => render(
                "I know nothing about this user yet. Their profile should show long-term preferences.",
                tool("user_profile_search", json!({})),
            ),
            1 => render(
                "The profile gives stable tastes; recent interactions show the current interest.",
                tool("user_history_search", json!({"m": 1})),
            ),
            _ => render(
                "Profile and recent history are enough to order the candidates.",
                rank(with_gold(&req.meta.candidates, gold, gold_first)),
            ),
        })
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, PolicyError> {
        self.script(req, true)
    }
}

/// Succeeds (oracle behavior) on the first `s` repeats of a case and ranks the
/// gold item last on the rest, so a case with R rollouts succeeds s/R times.
#[derive(Debug, Clone, Default)]
pub struct MixturePolicy {
    oracle: OraclePolicy,
    successes: HashMap<String, u32>,
}

impl MixturePolicy {
    pub fn new(oracle: OraclePolicy, successes: impl IntoIterator<Item = (String, u32)>) -> Self {
        MixturePolicy {
            oracle,
            successes: successes.into_iter().collect(),
        }
    }
}

impl Policy for MixturePolicy {
    fn name(&self) -> String {
        "mixture".into()
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, PolicyError> {
        let s = self.successes.get(&req.meta.case_id).copied().unwrap_or(0);
        self.oracle.script(req, req.meta.repeat < s)
    }
}

/// Makes `tool_calls` random argument-free tool calls, then answers with a
/// seeded uniform permutation of the candidates.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    pub tool_calls: usize,
}

impl Default for RandomPolicy {
    fn default() -> Self {
        RandomPolicy { tool_calls: 1 }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        format!("random-{}", self.tool_calls)
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, PolicyError> {
        let t = req.turn();
        if t < self.tool_calls {
            let mut rng = seed::rng(seed::derive(req.seed, "random:tool", t as u64));
            let action = match rng.gen_range(0..5) {
                0 => tool("user_profile_search", json!({})),
                1 => tool("user_history_search", json!({"m": rng.gen_range(1..=3)})),
                2 => {
                    let item = req.meta.candidates.choose(&mut rng).map(|i| i.as_str().to_owned());
                    tool("item_info_search", json!({ "item_id": item.unwrap_or_default() }))
                }
                3 => tool("similar_users_search", json!({})),
                _ => tool("knowledge_graph_search", json!({})),
            };
            return Ok(render("Gathering more information at random.", action));
        }
        let mut ids = req.meta.candidates.clone();
        ids.shuffle(&mut seed::rng(seed::derive(req.seed, "random:rank", 0)));
        Ok(render("Ranking at random.", rank(ids)))
    }
}

/// Re-emits recorded turn texts, keyed by (case id, repeat).
#[derive(Debug, Clone, Default)]
pub struct ReplayPolicy {
    scripts: HashMap<(String, u32), Vec<String>>,
}

impl ReplayPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, case_id: impl Into<String>, repeat: u32, turns: Vec<String>) {
        self.scripts.insert((case_id.into(), repeat), turns);
    }

    /// Scripts every recorded turn, including a rejected final turn.
    pub fn from_trajectories<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>) -> Self {
        let mut p = ReplayPolicy::new();
        for t in trajs {
            let mut turns: Vec<String> = t.steps.iter().map(|s| s.raw.clone()).collect();
            turns.extend(t.rejected_turn.clone());
            p.insert(t.case_id.clone(), t.repeat, turns);
        }
        p
    }
}

impl Policy for ReplayPolicy {
    fn name(&self) -> String {
        "replay".into()
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, PolicyError> {
        let key = (req.meta.case_id.clone(), req.meta.repeat);
        let turns = self
            .scripts
            .get(&key)
            .ok_or_else(|| PolicyError::Other(format!("no recording for case {} repeat {}", key.0, key.1)))?;
        turns
            .get(req.turn())
            .cloned()
            .ok_or_else(|| PolicyError::Other(format!("recording for case {} has only {} turns", key.0, turns.len())))
    }
}

type CompleteFn = dyn Fn(&CompletionRequest<'_>) -> Result<String, PolicyError> + Send + Sync;

/// A policy from a closure, for tests and experiments.
pub struct FnPolicy {
    name: String,
    f: Box<CompleteFn>,
}

impl FnPolicy {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&CompletionRequest<'_>) -> Result<String, PolicyError> + Send + Sync + 'static,
    ) -> Self {
        FnPolicy {
            name: name.into(),
            f: Box::new(f),
        }
    }
}

impl Policy for FnPolicy {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, PolicyError> {
        (self.f)(req)
    }
}

/// Wraps a policy and keeps every request's messages, per case.
pub struct RecordingPolicy<P> {
    inner: P,
    log: Mutex<Vec<(String, Vec<Message>)>>,
}

impl<P: Policy> RecordingPolicy<P> {
    pub fn new(inner: P) -> Self {
        RecordingPolicy {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<(String, Vec<Message>)> {
        self.log.lock().expect("log lock poisoned").clone()
    }
}

impl<P: Policy> Policy for RecordingPolicy<P> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, PolicyError> {
        self.log
            .lock()
            .expect("log lock poisoned")
            .push((req.meta.case_id.clone(), req.messages.to_vec()));
        self.inner.complete(req)
    }
}
