//! Training assets from trajectories: SFT filtering and masked samples,
//! difficulty-aware RL case selection, rewards and GRPO group math.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::agent::{run_batch, BatchConfig, EpisodeCase, Origin, Trajectory};
use crate::error::{Error, Result};
use crate::ids::ItemId;
use crate::policy::{validate_format, FinalRanking, Message, Policy};
use crate::toolbox::Toolbox;

/// Gold item ranked first.
pub fn indicator_acc(traj: &Trajectory) -> bool {
    traj.rank_of_gold() == Some(1)
}

/// Trajectories with the gold item first and a valid format.
pub fn filter_sft(trajs: &[Trajectory], max_turns: usize) -> Vec<Trajectory> {
    trajs
        .iter()
        .filter(|t| indicator_acc(t) && validate_format(t, max_turns))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftSample {
    pub case_id: String,
    /// System and user messages; conditioning context, never supervised.
    pub prompt: Vec<Message>,
    pub segments: Vec<Segment>,
    pub mask: Vec<u8>,
}

impl SftSample {
    pub fn transcript(&self) -> String {
        self.segments.iter().map(|s| s.text.as_str()).collect()
    }

    /// The policy's turn texts, in order.
    pub fn agent_turns(&self) -> Vec<String> {
        self.segments
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| **m == 1)
            .map(|(s, _)| s.text.clone())
            .collect()
    }

    pub fn mask_is_consistent(&self) -> bool {
        self.mask.len() == self.segments.len()
            && self
                .segments
                .iter()
                .zip(&self.mask)
                .all(|(s, m)| (*m == 1) == (s.origin == Origin::Agent))
    }
}

pub fn assemble_sft_sample(traj: &Trajectory) -> Result<SftSample> {
    if traj.outcome != crate::agent::Outcome::Ranked {
        return Err(Error::InvalidArgument(format!(
            "case {} ended with {}; only ranked trajectories become SFT samples",
            traj.case_id, traj.outcome
        )));
    }
    let segments: Vec<Segment> = traj
        .segments()
        .into_iter()
        .map(|(text, origin)| Segment { text, origin })
        .collect();
    let mask = segments.iter().map(|s| u8::from(s.origin == Origin::Agent)).collect();
    Ok(SftSample {
        case_id: traj.case_id.clone(),
        prompt: traj.prompt.clone(),
        segments,
        mask,
    })
}

/// NDCG@10 with one relevant item.
pub fn reward_accuracy(ranking: &FinalRanking, gold: &ItemId) -> Result<f64> {
    let rank = ranking
        .rank_of(gold)
        .ok_or_else(|| Error::InvalidArgument(format!("gold item {gold} is not in the ranking")))?;
    Ok(crate::evaluation::ndcg_from_rank(rank, 10))
}

pub fn reward_format(traj: &Trajectory, max_turns: usize) -> f64 {
    if validate_format(traj, max_turns) {
        0.0
    } else {
        -1.0
    }
}

/// Piecewise tool-use reward over `n` calls: −1 for none, rising to 1 at
/// three, flat through eight, then decaying.
pub fn reward_tool(n: i64) -> Result<f64> {
    if n < 0 {
        return Err(Error::InvalidArgument(format!("tool-call count {n} is negative")));
    }
    let x = n as f64;
    Ok(match n {
        0 => -1.0,
        1..=2 => x / 3.0,
        3..=8 => 1.0,
        9..=12 => 1.0 - 3.0 / 8.0 * (x - 8.0),
        _ => -0.5 - 0.3 * (x - 12.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            lambda1: 1.0,
            lambda2: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_acc: f64,
    pub r_fmt: f64,
    pub r_tool: f64,
    pub combined: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl RewardBreakdown {
    pub fn from_parts(r_acc: f64, r_fmt: f64, n_tool_calls: usize, w: RewardWeights) -> RewardBreakdown {
        let r_tool = reward_tool(n_tool_calls as i64).expect("usize is non-negative");
        let combined = if r_fmt < 0.0 {
            -1.0
        } else {
            w.lambda1 * r_acc + w.lambda2 * r_tool
        };
        RewardBreakdown {
            r_acc,
            r_fmt,
            r_tool,
            combined,
            lambda1: w.lambda1,
            lambda2: w.lambda2,
        }
    }
}

/// Any format failure overrides the reward to −1.
pub fn combined_reward(traj: &Trajectory, weights: RewardWeights, max_turns: usize) -> RewardBreakdown {
    let r_fmt = reward_format(traj, max_turns);
    let r_acc = match (&traj.final_ranking, r_fmt == 0.0) {
        (Some(r), true) => reward_accuracy(r, &traj.gold).unwrap_or(0.0),
        _ => 0.0,
    };
    RewardBreakdown::from_parts(r_acc, r_fmt, traj.n_tool_calls, weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAdvantages {
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub const ADVANTAGE_STD_FLOOR: f64 = 1e-8;

/// `a_i = (r_i − mean) / max(std, floor)` over one group of rollouts.
pub fn group_advantages(rewards: &[f64], std_floor: f64) -> Result<GroupAdvantages> {
    if rewards.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a group needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    let g = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / g;
    let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g).sqrt();
    let denom = std.max(std_floor);
    Ok(GroupAdvantages {
        rewards: rewards.to_vec(),
        advantages: rewards.iter().map(|r| (r - mean) / denom).collect(),
        mean,
        std,
    })
}

/// Clipped surrogate loss, negated so lower is better:
/// `−(1/G)·Σ [min(ρA, clip(ρ, 1−ε, 1+ε)·A) − β·kl]`.
pub fn grpo_surrogate(ratios: &[f64], advantages: &[f64], clip_eps: f64, kl: &[f64], beta: f64) -> Result<f64> {
    if ratios.len() != advantages.len() || ratios.len() != kl.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} ratios, {} advantages, {} kl estimates",
            ratios.len(),
            advantages.len(),
            kl.len()
        )));
    }
    if ratios.is_empty() {
        return Err(Error::Empty("ratio list"));
    }
    if let Some(r) = ratios.iter().find(|r| r.is_nan() || **r <= 0.0) {
        return Err(Error::InvalidArgument(format!("importance ratio {r} is not positive")));
    }
    let total: f64 = ratios
        .iter()
        .zip(advantages)
        .zip(kl)
        .map(|((&rho, &a), &k)| {
            let clipped = rho.clamp(1.0 - clip_eps, 1.0 + clip_eps);
            (rho * a).min(clipped * a) - beta * k
        })
        .sum();
    Ok(-total / ratios.len() as f64)
}

/// Half-open success-rate band `(lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlBand {
    pub lo: f64,
    pub hi: f64,
}

impl Default for RlBand {
    fn default() -> Self {
        RlBand { lo: 0.0, hi: 0.25 }
    }
}

impl RlBand {
    pub fn contains(&self, rate: f64) -> bool {
        rate > self.lo && rate <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlCase {
    pub case_id: String,
    pub rollout_count: usize,
    pub success_count: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    /// `{case_id}#{repeat}` in the accompanying rollout file.
    pub trajectory_ref: String,
    pub reward_breakdown: RewardBreakdown,
}

/// One exported RL case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlRecord {
    pub case_id: String,
    pub rollouts: Vec<RolloutRecord>,
    pub success_rate: f64,
}

pub fn trajectory_ref(t: &Trajectory) -> String {
    format!("{}#{}", t.case_id, t.repeat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlSelection {
    pub selected: Vec<RlCase>,
    /// Every rollout, selected or not, in case order.
    pub rollouts: Vec<Trajectory>,
    pub records: Vec<RlRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig {
    pub rollouts: u32,
    pub band: RlBand,
    pub weights: RewardWeights,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            rollouts: 8,
            band: RlBand::default(),
            weights: RewardWeights::default(),
        }
    }
}

/// Runs `rollouts` episodes per case and keeps cases whose success rate
/// falls in the band. Cases used for SFT must not be offered.
pub fn sample_rl_cases(
    policy: &dyn Policy,
    toolbox: &Toolbox,
    cases: &[EpisodeCase],
    sft_case_ids: &HashSet<String>,
    rl: &RlConfig,
    batch: &BatchConfig,
) -> Result<RlSelection> {
    let RlConfig { rollouts, band, weights } = *rl;
    if rollouts < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 rollouts per case, got {rollouts}")));
    }
    if let Some(c) = cases.iter().find(|c| sft_case_ids.contains(&c.case_id())) {
        return Err(Error::InvalidArgument(format!("case {} is already in the SFT set", c.case_id())));
    }
    let cfg = BatchConfig {
        repeats: rollouts,
        first_repeat: 0,
        ..*batch
    };
    let trajs = run_batch(policy, toolbox, cases, &cfg)?;
    let max_turns = cfg.limits.max_turns;
    let mut grouped: BTreeMap<&str, Vec<&Trajectory>> = BTreeMap::new();
    for t in &trajs {
        grouped.entry(t.case_id.as_str()).or_default().push(t);
    }
    let mut selected = Vec::new();
    let mut records = Vec::new();
    for case in cases {
        let id = case.case_id();
        let group = &grouped[id.as_str()];
        let success_count = group
            .iter()
            .filter(|t| indicator_acc(t) && validate_format(t, max_turns))
            .count();
        let success_rate = success_count as f64 / group.len() as f64;
        if !band.contains(success_rate) {
            continue;
        }
        selected.push(RlCase {
            case_id: id.clone(),
            rollout_count: group.len(),
            success_count,
            success_rate,
        });
        records.push(RlRecord {
            case_id: id,
            rollouts: group
                .iter()
                .map(|t| RolloutRecord {
                    trajectory_ref: trajectory_ref(t),
                    reward_breakdown: combined_reward(t, weights, max_turns),
                })
                .collect(),
            success_rate,
        });
    }
    Ok(RlSelection {
        selected,
        rollouts: trajs,
        records,
    })
}
