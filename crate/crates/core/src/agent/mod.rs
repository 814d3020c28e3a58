//! The think/act episode loop.

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CandidateSet, SplitCase};
use crate::error::{Error, Result};
use crate::ids::{mentions_item, ItemId, UserId};
use crate::policy::{
    parse_step, render_prompt, system_prompt, tool_message, user_prompt, Action, CompletionRequest, EpisodeMeta,
    FinalRanking, Message, Policy, SamplingParams,
};
use crate::seed;
use crate::toolbox::{Observation, ToolContext, Toolbox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t: usize,
    pub reasoning: String,
    pub action: Action,
    /// Present exactly when the action is a tool call.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
    /// The policy's text for this turn, verbatim.
    pub raw: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ranked,
    FormatError,
    LimitExceeded,
    PolicyError,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::Ranked, Outcome::FormatError, Outcome::LimitExceeded, Outcome::PolicyError];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Ranked => "ranked",
            Outcome::FormatError => "format_error",
            Outcome::LimitExceeded => "limit_exceeded",
            Outcome::PolicyError => "policy_error",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub case_id: String,
    pub user: UserId,
    pub candidates: Vec<ItemId>,
    pub gold: ItemId,
    pub seed: u64,
    pub repeat: u32,
    pub policy: String,
    pub outcome: Outcome,
    pub steps: Vec<Step>,
    pub n_tool_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_ranking: Option<FinalRanking>,
    /// Raw text of the turn that failed to parse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected_turn: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// System and user messages the episode started from.
    pub prompt: Vec<Message>,
}

/// Who produced a transcript segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Agent,
    Env,
}

impl Trajectory {
    pub fn count_tool_calls(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s.action, Action::ToolCall(_))).count()
    }

    pub fn rank_of_gold(&self) -> Option<usize> {
        self.final_ranking.as_ref().and_then(|r| r.rank_of(&self.gold))
    }

    pub fn tools_called(&self) -> impl Iterator<Item = &str> + '_ {
        self.steps.iter().filter_map(|s| match &s.action {
            Action::ToolCall(c) => Some(c.name.as_str()),
            Action::Rank { .. } => None,
        })
    }

    /// True when some observation payload names `item`.
    pub fn leaks(&self, item: &ItemId) -> bool {
        self.steps
            .iter()
            .filter_map(|s| s.observation.as_ref())
            .any(|o| mentions_item(&o.payload, item))
    }

    /// The trajectory as text: each turn's raw output, with each observation
    /// between turns. Agent segments are exactly the policy's outputs.
    pub fn segments(&self) -> Vec<(String, Origin)> {
        let mut out = Vec::new();
        for s in &self.steps {
            out.push((s.raw.clone(), Origin::Agent));
            if let Some(o) = &s.observation {
                out.push((format!("\n{}\n", tool_message(o)), Origin::Env));
            }
        }
        out
    }

    pub fn transcript(&self) -> String {
        self.segments().into_iter().map(|(t, _)| t).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeLimits {
    pub max_turns: usize,
    pub max_wall_time_secs: u64,
    pub max_prompt_tokens: usize,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        EpisodeLimits {
            max_turns: 16,
            max_wall_time_secs: 120,
            max_prompt_tokens: 32_000,
        }
    }
}

impl EpisodeLimits {
    pub fn validate(&self) -> Result<()> {
        if self.max_turns == 0 || self.max_wall_time_secs == 0 || self.max_prompt_tokens == 0 {
            return Err(Error::Config("episode limits must all be positive".into()));
        }
        Ok(())
    }
}

/// A split case with its persisted candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCase {
    pub split: SplitCase,
    pub candidates: CandidateSet,
}

impl EpisodeCase {
    pub fn new(split: SplitCase, candidates: CandidateSet) -> Result<Self> {
        if candidates.gold() != &split.held_out || candidates.user != split.user {
            return Err(Error::InvalidArgument(format!(
                "candidate set {} does not belong to case {}",
                candidates.case_id,
                split.case_id()
            )));
        }
        Ok(EpisodeCase { split, candidates })
    }

    pub fn case_id(&self) -> String {
        self.split.case_id()
    }
}

pub fn run_episode(
    policy: &dyn Policy,
    toolbox: &Toolbox,
    case: &EpisodeCase,
    limits: &EpisodeLimits,
    params: &SamplingParams,
    seed: u64,
    repeat: u32,
) -> Trajectory {
    let started = Instant::now();
    let wall = Duration::from_secs(limits.max_wall_time_secs);
    let split = &case.split;
    let candidates = &case.candidates.candidates;
    let system = system_prompt(toolbox.registry(), limits.max_turns);
    let user = user_prompt(&split.user, candidates, &toolbox.indexes().catalog);
    let meta = EpisodeMeta {
        case_id: case.case_id(),
        user: split.user.clone(),
        candidates: candidates.clone(),
        repeat,
    };
    let ctx = ToolContext {
        user: split.user.clone(),
        history: split.train_prefix.clone(),
        held_out: Some(split.held_out.clone()),
        seed,
    };
    let mut traj = Trajectory {
        case_id: meta.case_id.clone(),
        user: split.user.clone(),
        candidates: candidates.clone(),
        gold: split.held_out.clone(),
        seed,
        repeat,
        policy: policy.name(),
        outcome: Outcome::LimitExceeded,
        steps: Vec::new(),
        n_tool_calls: 0,
        final_ranking: None,
        rejected_turn: None,
        error: None,
        prompt: render_prompt(&system, &user, &[], None),
    };
    for t in 0..limits.max_turns {
        if started.elapsed() > wall {
            traj.error = Some(format!("wall time limit of {}s reached", limits.max_wall_time_secs));
            break;
        }
        let messages = render_prompt(&system, &user, &traj.steps, Some(limits.max_prompt_tokens));
        let req = CompletionRequest {
            messages: &messages,
            params: *params,
            seed: seed::derive(seed, "turn", t as u64),
            meta: &meta,
        };
        let text = match policy.complete(&req) {
            Ok(text) => text,
            Err(e) => {
                traj.outcome = Outcome::PolicyError;
                traj.error = Some(e.to_string());
                break;
            }
        };
        let parsed = match parse_step(&text) {
            Ok(p) => p,
            Err(e) => {
                traj.outcome = Outcome::FormatError;
                traj.error = Some(e.to_string());
                traj.rejected_turn = Some(text);
                break;
            }
        };
        match parsed.action {
            Action::ToolCall(call) => {
                let obs = toolbox.dispatch(&call, Some(&ctx));
                traj.steps.push(Step {
                    t,
                    reasoning: parsed.reasoning,
                    action: Action::ToolCall(call),
                    observation: Some(obs),
                    raw: text,
                });
            }
            Action::Rank { ranking } => {
                traj.final_ranking = Some(ranking.clone());
                traj.outcome = Outcome::Ranked;
                traj.steps.push(Step {
                    t,
                    reasoning: parsed.reasoning,
                    action: Action::Rank { ranking },
                    observation: None,
                    raw: text,
                });
                break;
            }
        }
    }
    if traj.outcome == Outcome::LimitExceeded && traj.error.is_none() {
        traj.error = Some(format!("no final ranking within {} turns", limits.max_turns));
    }
    traj.n_tool_calls = traj.count_tool_calls();
    traj
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub limits: EpisodeLimits,
    pub params: SamplingParams,
    pub parallelism: usize,
    pub seed: u64,
    /// Episodes per case; repeat indices start at `first_repeat`.
    pub repeats: u32,
    pub first_repeat: u32,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            limits: EpisodeLimits::default(),
            params: SamplingParams::default(),
            parallelism: 4,
            seed: 0,
            repeats: 1,
            first_repeat: 0,
        }
    }
}

/// Runs every case `repeats` times. Results come back in case order, repeats
/// adjacent, and do not depend on `parallelism`.
pub fn run_batch(
    policy: &dyn Policy,
    toolbox: &Toolbox,
    cases: &[EpisodeCase],
    config: &BatchConfig,
) -> Result<Vec<Trajectory>> {
    if cases.is_empty() {
        return Err(Error::Empty("case list"));
    }
    config.limits.validate()?;
    config.params.validate()?;
    let jobs: Vec<(&EpisodeCase, u32)> = cases
        .iter()
        .flat_map(|c| (config.first_repeat..config.first_repeat + config.repeats).map(move |r| (c, r)))
        .collect();
    let run = |(case, repeat): &(&EpisodeCase, u32)| {
        let seed = seed::derive(config.seed, &case.case_id(), *repeat as u64);
        run_episode(policy, toolbox, case, &config.limits, &config.params, seed, *repeat)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(run).collect()))
}
