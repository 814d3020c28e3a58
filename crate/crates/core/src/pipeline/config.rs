//! The run configuration: one TOML file plus `key.path=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{BatchConfig, EpisodeLimits};
use crate::corpus::{DatasetFormat, DatasetPaths, SplitRole, DEFAULT_POSITIVE_THRESHOLD};
use crate::error::{Error, Result};
use crate::gateway::GatewayConfig;
use crate::graphs::snapshot::{sha256_hex, Provenance};
use crate::learning::{RewardWeights, RlBand, RlConfig};
use crate::policy::{ChatPolicyConfig, SamplingParams};
use crate::retrieval::RemoteEmbedderConfig;
use crate::toolbox::ToolConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub format: DatasetFormat,
    /// Directory in the conventional layout; explicit paths below win.
    pub dir: Option<PathBuf>,
    pub interactions: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub users: Option<PathBuf>,
    pub positive_threshold: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            format: DatasetFormat::Amazon,
            dir: None,
            interactions: None,
            items: None,
            users: None,
            positive_threshold: DEFAULT_POSITIVE_THRESHOLD,
        }
    }
}

impl DatasetConfig {
    /// Resolved input files; each one must exist.
    pub fn paths(&self) -> Result<DatasetPaths> {
        let mut paths = match &self.dir {
            Some(dir) => DatasetPaths::in_dir(self.format, dir),
            None => DatasetPaths {
                interactions: self
                    .interactions
                    .clone()
                    .ok_or_else(|| Error::Config("dataset.dir or dataset.interactions is required".into()))?,
                items: None,
                users: None,
            },
        };
        if let Some(p) = &self.interactions {
            paths.interactions = p.clone();
        }
        if self.items.is_some() {
            paths.items = self.items.clone();
        }
        if self.users.is_some() {
            paths.users = self.users.clone();
        }
        for p in std::iter::once(&paths.interactions).chain(paths.items.iter()).chain(paths.users.iter()) {
            if !p.exists() {
                return Err(Error::Config(format!("dataset file {} does not exist", p.display())));
            }
        }
        Ok(paths)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileBackendKind {
    /// Deterministic category summary, no network.
    Template,
    /// Summaries from the chat endpoint in `policy.chat`.
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub backend: ProfileBackendKind,
    pub embedder: EmbedderKind,
    pub remote_embedder: RemoteEmbedderConfig,
    /// Vector cache for the remote embedder, relative to the output directory.
    pub embedding_cache: PathBuf,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            backend: ProfileBackendKind::Template,
            embedder: EmbedderKind::Hashing,
            remote_embedder: RemoteEmbedderConfig::default(),
            embedding_cache: PathBuf::from("profiles/embedding_cache.json"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Ranks the held-out item first; for pipeline checks.
    Oracle,
    /// Uniformly random rankings after a few random tool calls.
    Random,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub random_tool_calls: usize,
    pub chat: ChatPolicyConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            kind: PolicyKind::Oracle,
            random_tool_calls: 1,
            chat: ChatPolicyConfig::default(),
        }
    }
}

/// Which cases a command runs and how often.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSelection {
    pub split: SplitRole,
    pub repeats: u32,
    /// Only the first `max_cases` cases, when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cases: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSettings {
    /// Rollouts per case, also the GRPO group size.
    pub rollouts: u32,
    pub band: RlBand,
    pub clip_eps: f64,
    pub kl_beta: f64,
}

impl Default for RlSettings {
    fn default() -> Self {
        RlSettings {
            rollouts: 8,
            band: RlBand::default(),
            clip_eps: 0.2,
            kl_beta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub parallelism: usize,
    pub dataset: DatasetConfig,
    pub tools: ToolConfig,
    pub profiles: ProfileConfig,
    pub policy: PolicyConfig,
    pub sampling: SamplingParams,
    pub limits: EpisodeLimits,
    pub rewards: RewardWeights,
    pub rl: RlSettings,
    pub generation: CaseSelection,
    pub evaluation: CaseSelection,
    pub gateway: GatewayConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            parallelism: 4,
            dataset: DatasetConfig::default(),
            tools: ToolConfig::default(),
            profiles: ProfileConfig::default(),
            policy: PolicyConfig::default(),
            sampling: SamplingParams::default(),
            limits: EpisodeLimits::default(),
            rewards: RewardWeights::default(),
            rl: RlSettings::default(),
            generation: CaseSelection {
                split: SplitRole::Validation,
                repeats: 1,
                max_cases: None,
            },
            evaluation: CaseSelection {
                split: SplitRole::Test,
                repeats: 3,
                max_cases: None,
            },
            gateway: GatewayConfig::default(),
        }
    }
}

/// Sets `dotted.key` in `table`, creating intermediate tables.
fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.trim().is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

/// Deep merge: tables merge key by key, anything else replaces.
fn merge(dst: &mut toml::Table, src: toml::Table) {
    for (k, v) in src {
        match (dst.get_mut(&k), v) {
            (Some(toml::Value::Table(d)), toml::Value::Table(s)) => merge(d, s),
            (_, v) => {
                dst.insert(k, v);
            }
        }
    }
}

/// Makes relative dataset paths in a config file relative to that file.
fn resolve_dataset_paths(table: &mut toml::Table, base: &Path) {
    let Some(ds) = table.get_mut("dataset").and_then(toml::Value::as_table_mut) else { return };
    for key in ["dir", "interactions", "items", "users"] {
        if let Some(toml::Value::String(p)) = ds.get_mut(key) {
            if Path::new(p.as_str()).is_relative() {
                *p = base.join(p.as_str()).to_string_lossy().into_owned();
            }
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
        if let Some(p) = path {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let mut file =
                toml::from_str::<toml::Table>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            if let Some(base) = p.parent() {
                resolve_dataset_paths(&mut file, base);
            }
            merge(&mut table, file);
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            set_path(&mut table, k.trim(), parse_override_value(v.trim()))?;
        }
        let config: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.tools.validate()?;
        self.sampling.validate()?;
        self.limits.validate()?;
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if self.rl.rollouts < 2 {
            return Err(Error::Config("rl.rollouts must be at least 2".into()));
        }
        if !(self.rl.clip_eps > 0.0 && self.rl.clip_eps < 1.0) || self.rl.kl_beta < 0.0 {
            return Err(Error::Config("rl.clip_eps must lie in (0, 1) and rl.kl_beta be non-negative".into()));
        }
        if self.generation.repeats == 0 || self.evaluation.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration's canonical JSON.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash(),
            seed: self.seed,
        }
    }

    pub fn batch(&self, repeats: u32) -> BatchConfig {
        BatchConfig {
            limits: self.limits,
            params: self.sampling,
            parallelism: self.parallelism,
            seed: self.seed,
            repeats,
            first_repeat: 0,
        }
    }

    pub fn rl_config(&self) -> RlConfig {
        RlConfig {
            rollouts: self.rl.rollouts,
            band: self.rl.band,
            weights: self.rewards,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}
