//! NDCG, the repeated leave-one-out protocol and tool-usage statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agent::{run_batch, BatchConfig, EpisodeCase, Outcome, Trajectory};
use crate::error::{Error, Result};
use crate::ids::ItemId;
use crate::policy::{validate_format, FinalRanking, Policy};
use crate::toolbox::ToolName;

pub const CUTOFFS: [usize; 3] = [1, 5, 10];

/// Failure label for rankings that parse but are not a permutation.
pub const INVALID_RANKING: &str = "invalid_ranking";

/// NDCG@k for a single relevant item at 1-based `rank`.
pub fn ndcg_from_rank(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

pub fn ndcg_at_k(ranking: &FinalRanking, gold: &ItemId, k: usize) -> Result<f64> {
    if k == 0 || k > ranking.0.len() {
        return Err(Error::InvalidArgument(format!(
            "cutoff {k} outside 1..={}",
            ranking.0.len()
        )));
    }
    let rank = ranking
        .rank_of(gold)
        .ok_or_else(|| Error::InvalidArgument(format!("gold item {gold} is not in the ranking")))?;
    Ok(ndcg_from_rank(rank, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub case_id: String,
    pub repeat: u32,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// NDCG at each of [`CUTOFFS`]; zero for failed episodes.
    pub ndcg: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSummary {
    pub k: usize,
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub episodes: usize,
    pub repeats: u32,
    pub ndcg: Vec<CutoffSummary>,
    /// Episodes that scored zero, by reason.
    pub failures: BTreeMap<String, usize>,
    pub per_case: Vec<CaseScore>,
}

impl MetricsReport {
    pub fn mean(&self, k: usize) -> Option<f64> {
        self.ndcg.iter().find(|c| c.k == k).map(|c| c.mean)
    }
}

pub fn score_trajectory(t: &Trajectory, max_turns: usize) -> CaseScore {
    let rank = validate_format(t, max_turns).then(|| t.rank_of_gold()).flatten();
    let ndcg = match rank {
        Some(r) => CUTOFFS.map(|k| ndcg_from_rank(r, k)),
        None => [0.0; 3],
    };
    CaseScore {
        case_id: t.case_id.clone(),
        repeat: t.repeat,
        outcome: t.outcome,
        rank,
        ndcg,
    }
}

/// Aggregates trajectories; failed episodes count as zero.
pub fn metrics_from_trajectories(policy: &str, trajs: &[Trajectory], repeats: u32, max_turns: usize) -> MetricsReport {
    let per_case: Vec<CaseScore> = trajs.iter().map(|t| score_trajectory(t, max_turns)).collect();
    let n = per_case.len();
    let ndcg = CUTOFFS
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let xs: Vec<f64> = per_case.iter().map(|c| c.ndcg[j]).collect();
            let mean = if n == 0 { 0.0 } else { xs.iter().sum::<f64>() / n as f64 };
            let ci95 = if n < 2 {
                0.0
            } else {
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                1.96 * (var / n as f64).sqrt()
            };
            CutoffSummary { k, mean, ci95 }
        })
        .collect();
    let mut failures = BTreeMap::new();
    for (t, c) in trajs.iter().zip(&per_case) {
        if c.rank.is_some() {
            continue;
        }
        let label = match t.outcome {
            Outcome::Ranked => INVALID_RANKING,
            other => other.as_str(),
        };
        *failures.entry(label.to_owned()).or_insert(0) += 1;
    }
    MetricsReport {
        policy: policy.to_owned(),
        episodes: n,
        repeats,
        ndcg,
        failures,
        per_case,
    }
}

/// Runs every case `repeats` times and scores the results.
pub fn evaluate(
    policy: &dyn Policy,
    toolbox: &crate::toolbox::Toolbox,
    cases: &[EpisodeCase],
    repeats: u32,
    batch: &BatchConfig,
) -> Result<(MetricsReport, Vec<Trajectory>)> {
    let cfg = BatchConfig {
        repeats,
        first_repeat: 0,
        ..*batch
    };
    let trajs = run_batch(policy, toolbox, cases, &cfg)?;
    let report = metrics_from_trajectories(&policy.name(), &trajs, repeats, cfg.limits.max_turns);
    Ok((report, trajs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolUsage {
    /// Share of trajectories calling the tool at least once.
    pub fraction: f64,
    pub mean_calls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolUsageStats {
    pub trajectories: usize,
    pub per_tool: BTreeMap<String, ToolUsage>,
    pub mean_calls_per_trajectory: f64,
}

pub fn tool_usage_stats(trajs: &[Trajectory]) -> Result<ToolUsageStats> {
    if trajs.is_empty() {
        return Err(Error::Empty("trajectory list"));
    }
    let n = trajs.len() as f64;
    let per_tool = ToolName::ALL
        .iter()
        .map(|tool| {
            let counts: Vec<usize> = trajs
                .iter()
                .map(|t| t.tools_called().filter(|c| *c == tool.as_str()).count())
                .collect();
            let usage = ToolUsage {
                fraction: counts.iter().filter(|c| **c > 0).count() as f64 / n,
                mean_calls: counts.iter().sum::<usize>() as f64 / n,
            };
            (tool.as_str().to_owned(), usage)
        })
        .collect();
    Ok(ToolUsageStats {
        trajectories: trajs.len(),
        per_tool,
        mean_calls_per_trajectory: trajs.iter().map(|t| t.n_tool_calls).sum::<usize>() as f64 / n,
    })
}

/// Aligned table: one row per report, NDCG@1/5/10 with interval half-widths.
pub fn render_metrics_table(reports: &[MetricsReport]) -> String {
    let width = reports.iter().map(|r| r.policy.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>15}  {:>15}  {:>15}  {:>8}\n", "Policy", "N@1", "N@5", "N@10", "Failed");
    for r in reports {
        let cell = |k| {
            let c = r.ndcg.iter().find(|c| c.k == k).expect("all cutoffs present");
            format!("{:.4} ± {:.4}", c.mean, c.ci95)
        };
        let failed: usize = r.failures.values().sum();
        let _ = writeln!(out, "{:<width$}  {:>15}  {:>15}  {:>15}  {:>8}", r.policy, cell(1), cell(5), cell(10), failed);
    }
    out
}

pub fn render_usage_table(stats: &ToolUsageStats) -> String {
    let mut out = format!("{:<14}  {:>9}  {:>10}\n", "Tool", "Usage", "Calls/traj");
    for tool in ToolName::ALL {
        let u = &stats.per_tool[tool.as_str()];
        let _ = writeln!(out, "{:<14}  {:>8.2}%  {:>10.2}", tool.short_label(), u.fraction * 100.0, u.mean_calls);
    }
    let _ = writeln!(out, "{:<14}  {:>9}  {:>10.2}", "All tools", "", stats.mean_calls_per_trajectory);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(ndcg_from_rank(1, 1), 1.0);
        assert_eq!(ndcg_from_rank(6, 5), 0.0);
        assert!((ndcg_from_rank(4, 10) - 0.430_676_558_073_393).abs() < 1e-12);
        assert!((ndcg_from_rank(2, 10) - 0.630_929_753_571_457).abs() < 1e-12);
        assert!((ndcg_from_rank(10, 10) - 0.289_064_826_317_888).abs() < 1e-12);
    }

    #[test]
    fn ndcg_at_k_checks_inputs() {
        let r = FinalRanking((0..10).map(|i| ItemId::new(i.to_string())).collect());
        assert_eq!(ndcg_at_k(&r, &"0".into(), 5).unwrap(), 1.0);
        assert!(ndcg_at_k(&r, &"x".into(), 5).is_err());
        assert!(ndcg_at_k(&r, &"0".into(), 0).is_err());
        assert!(ndcg_at_k(&r, &"0".into(), 11).is_err());
    }

    #[test]
    fn empty_usage_is_an_error() {
        assert!(tool_usage_stats(&[]).is_err());
    }
}
