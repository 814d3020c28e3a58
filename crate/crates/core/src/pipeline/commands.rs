//! One function per `toolrec` subcommand. Each reads its upstream artifacts
//! from the output directory, writes its own, and records a manifest.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use super::config::{CaseSelection, EmbedderKind, PolicyKind, ProfileBackendKind, RunConfig};
use super::manifest::{artifact, external, ArtifactRef, Manifest};
use super::{build_profiles, gold_map, prepare, PreparedCorpus};
use crate::agent::{run_episode, EpisodeCase, Outcome, Trajectory};
use crate::corpus::{dataset_stats, load_dataset, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::{self, render_metrics_table, render_usage_table, tool_usage_stats};
use crate::gateway::{self, GatewayHandle};
use crate::graphs::snapshot::{self, Provenance};
use crate::graphs::{ItemRelationGraph, KnowledgeGraph};
use crate::jsonl;
use crate::learning::{
    assemble_sft_sample, combined_reward, filter_sft, reward_tool, sample_rl_cases, RewardBreakdown, SftSample,
};
use crate::policy::{ChatPolicy, OraclePolicy, Policy, RandomPolicy};
use crate::retrieval::{CachedEmbedder, EmbeddingCache, HashingEmbedder, RemoteEmbedder, SimilarityIndex};
use crate::toolbox::{build_graphs, build_similarity, ProfileBackend, ProfileStore, ToolIndexes, Toolbox, PROFILES_KIND};

pub const DATASET: &str = "corpus/dataset.snap";
pub const PREPARED: &str = "corpus/prepared.snap";
pub const STATS: &str = "corpus/stats.json";
pub const CANDIDATES: &str = "corpus/candidates.jsonl";
pub const ITEM_GRAPH: &str = "graphs/item_graph.snap";
pub const KG: &str = "graphs/knowledge_graph.snap";
pub const PROFILES: &str = "profiles/profiles.snap";
pub const SIMILARITY: &str = "profiles/similarity.snap";
pub const TRAJECTORIES: &str = "trajectories/trajectories.jsonl";
pub const SFT: &str = "sft/sft.jsonl";
pub const RL_CASES: &str = "rl/rl_cases.jsonl";
pub const RL_RECORDS: &str = "rl/records.jsonl";
pub const RL_ROLLOUTS: &str = "rl/rollouts.jsonl";
pub const EVAL_METRICS: &str = "eval/metrics.json";
pub const EVAL_USAGE: &str = "eval/tool_usage.json";
pub const EVAL_TRAJECTORIES: &str = "eval/trajectories.jsonl";
pub const REWARDS: &str = "rewards/rewards.jsonl";

const DATASET_KIND: &str = "dataset";
const PREPARED_KIND: &str = "prepared";
const ITEM_GRAPH_KIND: &str = "item_graph";
const KG_KIND: &str = "knowledge_graph";
const SIMILARITY_KIND: &str = "similarity";

/// Every subcommand, in pipeline order.
pub const COMMANDS: [&str; 10] = [
    "ingest",
    "build-graphs",
    "gen-profiles",
    "serve-tools",
    "run-agent",
    "gen-trajectories",
    "filter-sft",
    "sample-rl",
    "evaluate",
    "reward-check",
];

/// Fails with the producing command's name when `rel` is absent.
fn require(cfg: &RunConfig, rel: &str, producer: &'static str) -> Result<PathBuf> {
    let p = cfg.out_dir.join(rel);
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::MissingArtifact { path: p, producer })
    }
}

fn save_snapshot<T: Serialize>(cfg: &RunConfig, rel: &str, kind: &str, body: &T, prov: &Provenance) -> Result<ArtifactRef> {
    snapshot::save_with(&cfg.out_dir.join(rel), kind, body, Some(prov))?;
    artifact(&cfg.out_dir, rel)
}

fn write_json<T: Serialize>(cfg: &RunConfig, rel: &str, value: &T) -> Result<ArtifactRef> {
    let path = cfg.out_dir.join(rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    artifact(&cfg.out_dir, rel)
}

fn write_jsonl<T: Serialize>(cfg: &RunConfig, rel: &str, records: impl IntoIterator<Item = T>) -> Result<ArtifactRef> {
    jsonl::write(&cfg.out_dir.join(rel), records)?;
    artifact(&cfg.out_dir, rel)
}

fn finish(
    cfg: &RunConfig,
    command: &str,
    inputs: Vec<ArtifactRef>,
    outputs: Vec<ArtifactRef>,
    summary: serde_json::Value,
) -> Result<Manifest> {
    let m = Manifest {
        command: command.to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        inputs,
        outputs,
        summary,
    };
    m.write(&cfg.out_dir)?;
    tracing::info!(command, outputs = m.outputs.len(), "manifest written");
    Ok(m)
}

fn load_dataset_snapshot(cfg: &RunConfig) -> Result<(Dataset, ArtifactRef)> {
    let p = require(cfg, DATASET, "ingest")?;
    let (d, _) = snapshot::load(&p, DATASET_KIND)?;
    Ok((d, artifact(&cfg.out_dir, DATASET)?))
}

fn load_prepared(cfg: &RunConfig) -> Result<(PreparedCorpus, ArtifactRef)> {
    let p = require(cfg, PREPARED, "ingest")?;
    let (d, _) = snapshot::load(&p, PREPARED_KIND)?;
    Ok((d, artifact(&cfg.out_dir, PREPARED)?))
}

fn load_trajectories(cfg: &RunConfig, rel: &str, producer: &'static str) -> Result<(Vec<Trajectory>, ArtifactRef)> {
    let p = require(cfg, rel, producer)?;
    Ok((jsonl::read(&p)?, artifact(&cfg.out_dir, rel)?))
}

/// Loads the raw dataset, splits it and samples candidate sets.
pub fn ingest(cfg: &RunConfig) -> Result<Manifest> {
    let paths = cfg.dataset.paths()?;
    let dataset = load_dataset(cfg.dataset.format, &paths)?;
    let stats = dataset_stats(&dataset.interactions)?;
    tracing::info!(
        users = stats.n_users,
        items = stats.n_items,
        interactions = stats.n_interactions,
        "dataset loaded"
    );
    let prepared = prepare(&dataset, cfg.dataset.positive_threshold, cfg.seed)?;
    let prov = cfg.provenance();
    let mut inputs = vec![external(&paths.interactions)?];
    for p in paths.items.iter().chain(paths.users.iter()) {
        inputs.push(external(p)?);
    }
    let outputs = vec![
        save_snapshot(cfg, DATASET, DATASET_KIND, &dataset, &prov)?,
        save_snapshot(cfg, PREPARED, PREPARED_KIND, &prepared, &prov)?,
        write_json(cfg, STATS, &json!({"stats": stats, "ingest": dataset.report}))?,
        write_jsonl(cfg, CANDIDATES, &prepared.candidates)?,
    ];
    let summary = json!({
        "users": stats.n_users,
        "items": stats.n_items,
        "interactions": stats.n_interactions,
        "cases": prepared.split.cases.len(),
        "skipped_users": prepared.split.skipped.len(),
        "malformed_interactions": dataset.report.malformed_interactions,
    });
    finish(cfg, "ingest", inputs, outputs, summary)
}

/// Item relation graph and knowledge graph over training histories.
pub fn build_graphs_cmd(cfg: &RunConfig) -> Result<Manifest> {
    let (dataset, d_ref) = load_dataset_snapshot(cfg)?;
    let (prepared, p_ref) = load_prepared(cfg)?;
    let histories = prepared.training_histories();
    let (item_graph, report, kg) = build_graphs(&dataset.catalog, &dataset.demographics, &histories);
    let prov = cfg.provenance();
    let outputs = vec![
        save_snapshot(cfg, ITEM_GRAPH, ITEM_GRAPH_KIND, &item_graph, &prov)?,
        save_snapshot(cfg, KG, KG_KIND, &kg, &prov)?,
    ];
    let summary = json!({
        "items": report.items,
        "link_edges": report.link_edges,
        "dangling_links": report.dangling,
        "kg_nodes": kg.node_count(),
        "kg_edges": kg.edge_count(),
    });
    finish(cfg, "build-graphs", vec![d_ref, p_ref], outputs, summary)
}

/// User profiles and the hybrid similarity index.
pub fn gen_profiles(cfg: &RunConfig) -> Result<Manifest> {
    let (dataset, d_ref) = load_dataset_snapshot(cfg)?;
    let (prepared, p_ref) = load_prepared(cfg)?;
    let histories = prepared.training_histories();
    let profiles = match cfg.profiles.backend {
        ProfileBackendKind::Template => build_profiles(&ProfileBackend::Template, &dataset, &histories)?,
        ProfileBackendKind::Model => {
            let chat = ChatPolicy::new(cfg.policy.chat.clone())?;
            build_profiles(&ProfileBackend::Model(&chat), &dataset, &histories)?
        }
    };
    let prov = cfg.provenance();
    let mut outputs = vec![save_snapshot(cfg, PROFILES, PROFILES_KIND, &profiles, &prov)?];
    let similarity = match cfg.profiles.embedder {
        EmbedderKind::Hashing => build_similarity(&histories, &profiles, &HashingEmbedder::default())?,
        EmbedderKind::Remote => {
            let cache_rel = cfg.profiles.embedding_cache.to_string_lossy().into_owned();
            let cache = EmbeddingCache::load(&cfg.out_dir.join(&cache_rel))?;
            let cached = CachedEmbedder::new(RemoteEmbedder::new(cfg.profiles.remote_embedder.clone())?, cache);
            let index = build_similarity(&histories, &profiles, &cached)?;
            tracing::info!(misses = cached.misses(), "embedding cache updated");
            cached.into_cache().save(&cfg.out_dir.join(&cache_rel))?;
            outputs.push(artifact(&cfg.out_dir, &cache_rel)?);
            index
        }
    };
    outputs.push(save_snapshot(cfg, SIMILARITY, SIMILARITY_KIND, &similarity, &prov)?);
    let summary = json!({"profiles": profiles.len(), "indexed_users": similarity.len()});
    finish(cfg, "gen-profiles", vec![d_ref, p_ref], outputs, summary)
}

/// The toolbox from the snapshots of ingest, build-graphs and gen-profiles.
pub fn load_toolbox(cfg: &RunConfig) -> Result<(Toolbox, PreparedCorpus, Vec<ArtifactRef>)> {
    let (dataset, d_ref) = load_dataset_snapshot(cfg)?;
    let (prepared, p_ref) = load_prepared(cfg)?;
    let (item_graph, g_hash) = snapshot::load::<ItemRelationGraph>(&require(cfg, ITEM_GRAPH, "build-graphs")?, ITEM_GRAPH_KIND)?;
    let (kg, k_hash) = snapshot::load::<KnowledgeGraph>(&require(cfg, KG, "build-graphs")?, KG_KIND)?;
    let (profiles, pr_hash) = ProfileStore::load(&require(cfg, PROFILES, "gen-profiles")?)?;
    let (similarity, s_hash) = snapshot::load::<SimilarityIndex>(&require(cfg, SIMILARITY, "gen-profiles")?, SIMILARITY_KIND)?;
    let indexes = ToolIndexes {
        catalog: dataset.catalog,
        histories: prepared.training_histories(),
        profiles,
        item_graph,
        kg,
        similarity,
    };
    let mut toolbox = Toolbox::new(indexes, cfg.tools.clone())?;
    toolbox.index_hashes = BTreeMap::from([
        ("item_graph".to_owned(), g_hash),
        ("knowledge_graph".to_owned(), k_hash),
        ("profiles".to_owned(), pr_hash),
        ("similarity".to_owned(), s_hash),
    ]);
    let refs = vec![
        d_ref,
        p_ref,
        artifact(&cfg.out_dir, ITEM_GRAPH)?,
        artifact(&cfg.out_dir, KG)?,
        artifact(&cfg.out_dir, PROFILES)?,
        artifact(&cfg.out_dir, SIMILARITY)?,
    ];
    Ok((toolbox, prepared, refs))
}

/// Starts the gateway; the caller decides how long it runs.
pub fn serve_tools(cfg: &RunConfig) -> Result<(GatewayHandle, Manifest)> {
    let (toolbox, _, inputs) = load_toolbox(cfg)?;
    let handle = gateway::serve(Arc::new(toolbox), &cfg.gateway)?;
    let summary = json!({"address": handle.addr().to_string()});
    let m = finish(cfg, "serve-tools", inputs, vec![], summary)?;
    Ok((handle, m))
}

fn select_cases(prepared: &PreparedCorpus, sel: &CaseSelection) -> Result<Vec<EpisodeCase>> {
    let mut cases = prepared.episode_cases(sel.split);
    if let Some(n) = sel.max_cases {
        cases.truncate(n);
    }
    if cases.is_empty() {
        return Err(Error::Empty("episode cases for the selected split"));
    }
    Ok(cases)
}

/// The configured policy. The oracle knows the gold items of `cases`.
pub fn make_policy(cfg: &RunConfig, cases: &[EpisodeCase]) -> Result<Box<dyn Policy>> {
    Ok(match cfg.policy.kind {
        PolicyKind::Oracle => Box::new(OraclePolicy::new(gold_map(cases))),
        PolicyKind::Random => Box::new(RandomPolicy {
            tool_calls: cfg.policy.random_tool_calls,
        }),
        PolicyKind::Chat => Box::new(ChatPolicy::new(cfg.policy.chat.clone())?),
    })
}

fn outcome_counts(trajs: &[Trajectory]) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for t in trajs {
        *out.entry(t.outcome.as_str()).or_insert(0) += 1;
    }
    out
}

fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// One episode, printed as a transcript. Defaults to the first evaluation case.
pub fn run_agent(cfg: &RunConfig, case_id: Option<&str>) -> Result<(Manifest, Trajectory)> {
    let (toolbox, prepared, inputs) = load_toolbox(cfg)?;
    let cases = match case_id {
        Some(id) => {
            let all = prepared
                .episode_cases(crate::corpus::SplitRole::Validation)
                .into_iter()
                .chain(prepared.episode_cases(crate::corpus::SplitRole::Test));
            let found: Vec<EpisodeCase> = all.filter(|c| c.case_id() == id).collect();
            if found.is_empty() {
                return Err(Error::InvalidArgument(format!("no case '{id}'")));
            }
            found
        }
        None => select_cases(&prepared, &cfg.evaluation)?.into_iter().take(1).collect(),
    };
    let policy = make_policy(cfg, &cases)?;
    let case = &cases[0];
    let seed = crate::seed::derive(cfg.seed, &case.case_id(), 0);
    let traj = run_episode(policy.as_ref(), &toolbox, case, &cfg.limits, &cfg.sampling, seed, 0);
    let rel = format!("agent/{}.json", file_safe(&case.case_id()));
    let out = write_json(cfg, &rel, &traj)?;
    let summary = json!({"case_id": traj.case_id, "outcome": traj.outcome, "tool_calls": traj.n_tool_calls, "gold_rank": traj.rank_of_gold()});
    let m = finish(cfg, "run-agent", inputs, vec![out], summary)?;
    Ok((m, traj))
}

/// Runs the policy over the generation split.
pub fn gen_trajectories(cfg: &RunConfig) -> Result<Manifest> {
    let (toolbox, prepared, inputs) = load_toolbox(cfg)?;
    let cases = select_cases(&prepared, &cfg.generation)?;
    let policy = make_policy(cfg, &cases)?;
    tracing::info!(cases = cases.len(), repeats = cfg.generation.repeats, policy = %policy.name(), "generating trajectories");
    let trajs = crate::agent::run_batch(policy.as_ref(), &toolbox, &cases, &cfg.batch(cfg.generation.repeats))?;
    let out = write_jsonl(cfg, TRAJECTORIES, &trajs)?;
    let summary = json!({"episodes": trajs.len(), "outcomes": outcome_counts(&trajs)});
    finish(cfg, "gen-trajectories", inputs, vec![out], summary)
}

/// Keeps accurate, well-formed trajectories and exports masked samples.
pub fn filter_sft_cmd(cfg: &RunConfig) -> Result<Manifest> {
    let (trajs, input) = load_trajectories(cfg, TRAJECTORIES, "gen-trajectories")?;
    let kept = filter_sft(&trajs, cfg.limits.max_turns);
    let samples = kept.iter().map(assemble_sft_sample).collect::<Result<Vec<_>>>()?;
    let out = write_jsonl(cfg, SFT, &samples)?;
    let summary = json!({"input": trajs.len(), "kept": samples.len()});
    finish(cfg, "filter-sft", vec![input], vec![out], summary)
}

/// Rolls out the generation split minus SFT cases and keeps the
/// low-success band.
pub fn sample_rl(cfg: &RunConfig) -> Result<Manifest> {
    let sft_path = require(cfg, SFT, "filter-sft")?;
    let sft: Vec<SftSample> = jsonl::read(&sft_path)?;
    let sft_ids: HashSet<String> = sft.into_iter().map(|s| s.case_id).collect();
    let (toolbox, prepared, mut inputs) = load_toolbox(cfg)?;
    inputs.push(artifact(&cfg.out_dir, SFT)?);
    let cases: Vec<EpisodeCase> = select_cases(&prepared, &cfg.generation)?
        .into_iter()
        .filter(|c| !sft_ids.contains(&c.case_id()))
        .collect();
    let (selected, records, rollouts) = if cases.is_empty() {
        tracing::warn!("every generation case is already in the SFT set; nothing to roll out");
        (vec![], vec![], vec![])
    } else {
        let policy = make_policy(cfg, &cases)?;
        let sel = sample_rl_cases(policy.as_ref(), &toolbox, &cases, &sft_ids, &cfg.rl_config(), &cfg.batch(1))?;
        (sel.selected, sel.records, sel.rollouts)
    };
    let outputs = vec![
        write_jsonl(cfg, RL_CASES, &selected)?,
        write_jsonl(cfg, RL_RECORDS, &records)?,
        write_jsonl(cfg, RL_ROLLOUTS, &rollouts)?,
    ];
    let summary = json!({"candidates": cases.len(), "selected": selected.len(), "rollouts": rollouts.len()});
    finish(cfg, "sample-rl", inputs, outputs, summary)
}

/// NDCG@{1,5,10} over the evaluation split. Returns the rendered tables.
pub fn evaluate_cmd(cfg: &RunConfig) -> Result<(Manifest, String)> {
    require(cfg, PREPARED, "ingest")?;
    let (toolbox, prepared, inputs) = load_toolbox(cfg)?;
    let cases = select_cases(&prepared, &cfg.evaluation)?;
    let policy = make_policy(cfg, &cases)?;
    let (report, trajs) = evaluation::evaluate(
        policy.as_ref(),
        &toolbox,
        &cases,
        cfg.evaluation.repeats,
        &cfg.batch(cfg.evaluation.repeats),
    )?;
    let usage = tool_usage_stats(&trajs)?;
    let outputs = vec![
        write_json(cfg, EVAL_METRICS, &report)?,
        write_json(cfg, EVAL_USAGE, &usage)?,
        write_jsonl(cfg, EVAL_TRAJECTORIES, &trajs)?,
    ];
    let text = format!("{}\n{}", render_metrics_table(std::slice::from_ref(&report)), render_usage_table(&usage));
    let summary = json!({
        "episodes": report.episodes,
        "ndcg@1": report.mean(1),
        "ndcg@5": report.mean(5),
        "ndcg@10": report.mean(10),
        "failures": report.failures,
    });
    Ok((finish(cfg, "evaluate", inputs, outputs, summary)?, text))
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RewardRow {
    pub case_id: String,
    pub repeat: u32,
    pub outcome: Outcome,
    pub breakdown: RewardBreakdown,
}

/// The tool-utilization reward for 0..=16 calls.
pub fn render_tool_reward_table() -> String {
    let mut out = String::from("calls  r_tool\n");
    for n in 0..=16 {
        let _ = writeln!(out, "{n:>5}  {:>7.4}", reward_tool(n).expect("non-negative"));
    }
    out
}

/// Recomputes rewards for a trajectory file (default: the generated one).
pub fn reward_check(cfg: &RunConfig, input: Option<&Path>) -> Result<(Manifest, String)> {
    let (trajs, input_ref) = match input {
        Some(p) => {
            if !p.exists() {
                return Err(Error::Config(format!("trajectory file {} does not exist", p.display())));
            }
            (jsonl::read::<Trajectory>(p)?, external(p)?)
        }
        None => load_trajectories(cfg, TRAJECTORIES, "gen-trajectories")?,
    };
    let rows: Vec<RewardRow> = trajs
        .iter()
        .map(|t| RewardRow {
            case_id: t.case_id.clone(),
            repeat: t.repeat,
            outcome: t.outcome,
            breakdown: combined_reward(t, cfg.rewards, cfg.limits.max_turns),
        })
        .collect();
    let mut text = render_tool_reward_table();
    let _ = writeln!(
        text,
        "\nweights: lambda1 = {}, lambda2 = {}\n\n{:<24} {:>6} {:>8} {:>6} {:>8} {:>8}",
        cfg.rewards.lambda1, cfg.rewards.lambda2, "case", "repeat", "r_acc", "r_fmt", "r_tool", "combined"
    );
    for r in &rows {
        let b = &r.breakdown;
        let _ = writeln!(
            text,
            "{:<24} {:>6} {:>8.4} {:>6} {:>8.4} {:>8}",
            r.case_id, r.repeat, b.r_acc, b.r_fmt, b.r_tool, b.combined
        );
    }
    let out = write_jsonl(cfg, REWARDS, &rows)?;
    let mean = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.breakdown.combined).sum::<f64>() / rows.len() as f64
    };
    let summary = json!({"trajectories": rows.len(), "mean_combined": mean});
    Ok((finish(cfg, "reward-check", vec![input_ref], vec![out], summary)?, text))
}
