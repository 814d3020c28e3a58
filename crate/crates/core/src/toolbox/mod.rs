//! The five recommendation tools behind one call interface.
//!
//! Every call goes through [`Toolbox::dispatch`], which validates arguments
//! against the [`ToolRegistry`] and turns every failure into an
//! [`Observation`] with `ok = false`. Payloads are labeled plain text; item
//! references are always written `item:<id>`.

pub mod profile;
pub mod registry;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::corpus::{BehaviorSequence, Demographics, ItemCatalog, SplitOutcome};
use crate::error::{Error, Result};
use crate::graphs::{
    build_item_relation_graph, build_knowledge_graph, sample_kg_evidence, GraphBuildReport, ItemRelationGraph, KgEvidence,
    KnowledgeGraph, RelatedItem,
};
use crate::ids::{ItemId, UserId};
use crate::retrieval::{embed_profile, EmbeddingProvider, HybridConfig, SimilarityIndex};

pub use profile::{
    category_frequencies, generate_profile, profile_prompt, ProfileBackend, ProfileStore, Summarizer,
    UserProfile, PROFILES_KIND, PROFILE_INSTRUCTIONS,
};
pub use registry::{ParamKind, ParamSpec, ToolName, ToolRegistry, ToolSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub history_page_size: usize,
    pub item_neighbors: usize,
    pub similar_users: usize,
    pub alpha: f64,
    pub kg_k1: usize,
    pub kg_k2: usize,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            history_page_size: 5,
            item_neighbors: 5,
            similar_users: 5,
            alpha: 0.5,
            kg_k1: 2,
            kg_k2: 3,
        }
    }
}

impl ToolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_page_size == 0 || self.item_neighbors == 0 || self.similar_users == 0 {
            return Err(Error::Config("tool page sizes and neighbor counts must be >= 1".into()));
        }
        if self.kg_k1 >= self.kg_k2 {
            return Err(Error::Config(format!(
                "kg_k1 ({}) must be smaller than kg_k2 ({})",
                self.kg_k1, self.kg_k2
            )));
        }
        HybridConfig {
            alpha: self.alpha,
            top_k: self.similar_users,
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>, arguments: Value) -> Self {
        ToolCall {
            name: name.into(),
            arguments: match arguments {
                Value::Object(m) => m,
                _ => Map::new(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub tool: String,
    /// Shown to the policy verbatim.
    pub payload: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Observation {
    pub fn success(tool: &str, payload: String) -> Self {
        Observation {
            tool: tool.to_owned(),
            payload,
            ok: true,
            error: None,
        }
    }

    pub fn failure(tool: &str, error: impl Into<String>) -> Self {
        let error = error.into();
        Observation {
            tool: tool.to_owned(),
            payload: format!("error: {error}"),
            ok: false,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub item: ItemId,
    pub title: String,
    pub category: String,
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPage {
    pub user: UserId,
    pub page_index: usize,
    /// Chronological within the page.
    pub items: Vec<HistoryEntry>,
    pub exhausted: bool,
}

/// Positions `n-mk+1 ..= n-(m-1)k` (1-based, clipped at 1) of a length-`n`
/// sequence as a 0-based range, plus the exhausted flag.
pub fn page_bounds(n: usize, m: usize, k: usize) -> (std::ops::Range<usize>, bool) {
    assert!(m >= 1 && k >= 1, "page index and size start at 1");
    let hi = n.saturating_sub((m - 1).saturating_mul(k));
    let lo = n.saturating_sub(m.saturating_mul(k));
    (lo..hi, lo == 0)
}

pub fn history_page(seq: &BehaviorSequence, m: usize, k: usize, catalog: &ItemCatalog) -> HistoryPage {
    let (range, exhausted) = page_bounds(seq.len(), m, k);
    HistoryPage {
        user: seq.user.clone(),
        page_index: m,
        items: seq.items[range]
            .iter()
            .map(|e| {
                let meta = catalog.get(&e.item);
                HistoryEntry {
                    item: e.item.clone(),
                    title: meta.map(|m| m.title.clone()).unwrap_or_default(),
                    category: meta.map(|m| m.primary_category().to_owned()).unwrap_or_else(|| "unknown".into()),
                    rating: e.rating,
                }
            })
            .collect(),
        exhausted,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemCard {
    pub item: ItemId,
    pub attributes: Vec<(String, String)>,
    pub related: Vec<RelatedItem>,
}

/// The episode a call belongs to. Outside an episode (gateway calls) there
/// is no context and `user_id` must be given explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolContext {
    pub user: UserId,
    /// Training prefix of the active case.
    pub history: BehaviorSequence,
    /// Never shown in any payload.
    pub held_out: Option<ItemId>,
    pub seed: u64,
}

impl ToolContext {
    fn exclude(&self) -> HashSet<ItemId> {
        self.held_out.iter().cloned().collect()
    }
}

/// Immutable indexes the tools read.
#[derive(Debug, Clone)]
pub struct ToolIndexes {
    pub catalog: ItemCatalog,
    /// Training histories (validation prefixes) of every user.
    pub histories: BTreeMap<UserId, BehaviorSequence>,
    pub profiles: ProfileStore,
    pub item_graph: ItemRelationGraph,
    pub kg: KnowledgeGraph,
    pub similarity: SimilarityIndex,
}

/// Histories the tools may expose: each split user's validation prefix, and
/// the full sequence of users too short to be split.
pub fn training_histories(
    sequences: &BTreeMap<UserId, BehaviorSequence>,
    split: &SplitOutcome,
) -> BTreeMap<UserId, BehaviorSequence> {
    let mut out = sequences.clone();
    for case in split.validation_cases() {
        out.insert(case.user.clone(), case.train_prefix.clone());
    }
    out.retain(|_, s| !s.is_empty());
    out
}

/// Item relation graph and knowledge graph over training histories.
pub fn build_graphs(
    catalog: &ItemCatalog,
    demographics: &BTreeMap<UserId, Demographics>,
    histories: &BTreeMap<UserId, BehaviorSequence>,
) -> (ItemRelationGraph, GraphBuildReport, KnowledgeGraph) {
    let owned: Vec<(UserId, Vec<ItemId>)> = histories
        .iter()
        .map(|(u, s)| (u.clone(), s.item_ids().cloned().collect()))
        .collect();
    let sessions: Vec<Vec<ItemId>> = owned.iter().map(|(_, v)| v.clone()).collect();
    let (item_graph, report) = build_item_relation_graph(catalog, Some(&sessions));
    let kg = build_knowledge_graph(owned.iter().map(|(u, v)| (u, v.as_slice())), demographics, catalog);
    (item_graph, report, kg)
}

/// Embeds every profile and indexes it with the user's training item set.
pub fn build_similarity(
    histories: &BTreeMap<UserId, BehaviorSequence>,
    profiles: &ProfileStore,
    embedder: &dyn EmbeddingProvider,
) -> Result<SimilarityIndex> {
    let embeddings = profiles
        .profiles
        .values()
        .map(|p| embed_profile(embedder, &p.user, &p.rendered))
        .collect::<Result<Vec<_>>>()?;
    let item_sets = histories.iter().map(|(u, s)| (u.clone(), s.item_set())).collect();
    SimilarityIndex::build(item_sets, embeddings)
}

/// Builds the item graph, knowledge graph and similarity index from training
/// histories and profiles.
pub fn build_indexes(
    catalog: ItemCatalog,
    demographics: &BTreeMap<UserId, Demographics>,
    histories: BTreeMap<UserId, BehaviorSequence>,
    profiles: ProfileStore,
    embedder: &dyn EmbeddingProvider,
) -> Result<ToolIndexes> {
    let (item_graph, _, kg) = build_graphs(&catalog, demographics, &histories);
    let similarity = build_similarity(&histories, &profiles, embedder)?;
    Ok(ToolIndexes {
        catalog,
        histories,
        profiles,
        item_graph,
        kg,
        similarity,
    })
}

pub struct Toolbox {
    indexes: ToolIndexes,
    config: ToolConfig,
    registry: ToolRegistry,
    /// Content hashes of the loaded indexes, reported by the gateway.
    pub index_hashes: BTreeMap<String, String>,
}

impl Toolbox {
    pub fn new(indexes: ToolIndexes, config: ToolConfig) -> Result<Self> {
        config.validate()?;
        Ok(Toolbox {
            indexes,
            config,
            registry: ToolRegistry::default(),
            index_hashes: BTreeMap::new(),
        })
    }

    /// Restricts the exposed tools; calls to others fail as unknown.
    pub fn with_tools(mut self, tools: &[ToolName]) -> Self {
        self.registry = ToolRegistry::with_tools(tools);
        self
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn config(&self) -> &ToolConfig {
        &self.config
    }

    pub fn indexes(&self) -> &ToolIndexes {
        &self.indexes
    }

    pub fn dispatch(&self, call: &ToolCall, ctx: Option<&ToolContext>) -> Observation {
        let name = call.name.trim();
        let Some(spec) = self.registry.get(name) else {
            return Observation::failure(
                name,
                format!(
                    "unknown tool '{name}'; available tools: {}",
                    self.registry.names().join(", ")
                ),
            );
        };
        if let Err(msg) = spec.validate(&call.arguments) {
            return Observation::failure(name, msg);
        }
        let args = Args(&call.arguments);
        let result = match spec.name {
            ToolName::UserProfileSearch => args.user(ctx).and_then(|u| self.user_profile(&u)),
            ToolName::UserHistorySearch => args.user(ctx).and_then(|u| {
                let m = args.int("m").unwrap_or(1);
                let k = args.int("k").unwrap_or(self.config.history_page_size);
                self.user_history(&u, m, k, ctx).map(|p| render_history(&p, self.history_len(&u, ctx)))
            }),
            ToolName::ItemInfoSearch => {
                let item = ItemId::new(args.id("item_id").expect("validated as required"));
                let k = args.int("top_k").unwrap_or(self.config.item_neighbors);
                self.item_info(&item, k, ctx).map(|c| render_item_card(&c, &self.indexes.catalog))
            }
            ToolName::SimilarUsersSearch => args.user(ctx).and_then(|u| {
                let k = args.int("k").unwrap_or(self.config.similar_users);
                self.similar_users(&u, k)
            }),
            ToolName::KnowledgeGraphSearch => args.user(ctx).and_then(|u| {
                let k1 = args.int("k1").unwrap_or(self.config.kg_k1);
                let k2 = args.int("k2").unwrap_or(self.config.kg_k2);
                let seed = args.0.get("seed").and_then(Value::as_u64).or(ctx.map(|c| c.seed)).unwrap_or(0);
                self.kg_search(&u, k1, k2, seed, ctx)
            }),
        };
        match result {
            Ok(payload) => Observation::success(name, payload),
            Err(msg) => Observation::failure(name, msg),
        }
    }

    /// Payload: the cached rendered profile, verbatim.
    pub fn user_profile(&self, user: &UserId) -> Result<String, String> {
        self.indexes
            .profiles
            .get(user)
            .map(|p| p.rendered.clone())
            .ok_or_else(|| format!("unknown user {}", user.tagged()))
    }

    fn history_of(&self, user: &UserId, ctx: Option<&ToolContext>) -> Result<BehaviorSequence, String> {
        let mut seq = match ctx {
            Some(c) if &c.user == user => c.history.clone(),
            _ => self
                .indexes
                .histories
                .get(user)
                .cloned()
                .ok_or_else(|| format!("unknown user {}", user.tagged()))?,
        };
        if let Some(held) = ctx.and_then(|c| c.held_out.as_ref()) {
            seq.items.retain(|e| &e.item != held);
        }
        Ok(seq)
    }

    fn history_len(&self, user: &UserId, ctx: Option<&ToolContext>) -> usize {
        self.history_of(user, ctx).map(|s| s.len()).unwrap_or(0)
    }

    pub fn user_history(
        &self,
        user: &UserId,
        m: usize,
        k: usize,
        ctx: Option<&ToolContext>,
    ) -> Result<HistoryPage, String> {
        if m == 0 || k == 0 {
            return Err("m and k must be >= 1".into());
        }
        let seq = self.history_of(user, ctx)?;
        Ok(history_page(&seq, m, k, &self.indexes.catalog))
    }

    pub fn item_info(&self, item: &ItemId, k: usize, ctx: Option<&ToolContext>) -> Result<ItemCard, String> {
        let meta = self
            .indexes
            .catalog
            .get(item)
            .ok_or_else(|| format!("unknown item {}; use identifiers from the candidate list or a tool result", item.tagged()))?;
        let exclude = ctx.map(ToolContext::exclude).unwrap_or_default();
        let related = self
            .indexes
            .item_graph
            .related_items_excluding(item, k, &exclude)
            .map_err(|e| e.to_string())?;
        Ok(ItemCard {
            item: item.clone(),
            attributes: meta.attributes().into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
            related,
        })
    }

    pub fn similar_users(&self, user: &UserId, k: usize) -> Result<String, String> {
        if k == 0 {
            return Err("k must be ≥ 1".into());
        }
        if !self.indexes.similarity.contains(user) {
            return Err(format!("unknown user {}", user.tagged()));
        }
        let top = self
            .indexes
            .similarity
            .top_similar_users(user, k, self.config.alpha)
            .map_err(|e| e.to_string())?;
        let mut out = format!("tool: similar_users_search\nuser: {}\nsimilar users: {}\n", user.tagged(), top.len());
        for (rank, (v, score)) in top.iter().enumerate() {
            let profile = self.indexes.profiles.get(v).map(|p| p.rendered.as_str()).unwrap_or("(no profile)");
            let _ = writeln!(out, "{}. {} (similarity {score:.4})", rank + 1, v.tagged());
            for line in profile.lines() {
                let _ = writeln!(out, "   {line}");
            }
        }
        Ok(out.trim_end().to_owned())
    }

    pub fn kg_evidence(
        &self,
        user: &UserId,
        k1: usize,
        k2: usize,
        seed: u64,
        ctx: Option<&ToolContext>,
    ) -> Result<KgEvidence, String> {
        let exclude = ctx.map(ToolContext::exclude).unwrap_or_default();
        let mut ev = sample_kg_evidence(&self.indexes.kg, user, k1, k2, seed, &exclude).map_err(|e| match e {
            Error::UnknownUser(_) => format!("unknown user {}", user.tagged()),
            other => other.to_string(),
        })?;
        let terminals: BTreeSet<UserId> = ev.terminal_users().into_iter().cloned().collect();
        for v in terminals {
            if let Some(p) = self.indexes.profiles.get(&v) {
                ev.profiles.insert(v, p.rendered.clone());
            }
        }
        Ok(ev)
    }

    pub fn kg_search(
        &self,
        user: &UserId,
        k1: usize,
        k2: usize,
        seed: u64,
        ctx: Option<&ToolContext>,
    ) -> Result<String, String> {
        let ev = self.kg_evidence(user, k1, k2, seed, ctx)?;
        let mut out = format!("tool: knowledge_graph_search\nuser: {}\n", user.tagged());
        if ev.is_empty() {
            out.push_str("no collaborative paths found");
            return Ok(out);
        }
        let _ = writeln!(out, "paths: {}", ev.paths.len());
        for e in &ev.explanations {
            let _ = writeln!(out, "- {e}");
        }
        if !ev.profiles.is_empty() {
            out.push_str("connected user profiles:\n");
            for (v, p) in &ev.profiles {
                let _ = writeln!(out, "{}:", v.tagged());
                for line in p.lines() {
                    let _ = writeln!(out, "   {line}");
                }
            }
        }
        Ok(out.trim_end().to_owned())
    }
}

struct Args<'a>(&'a Map<String, Value>);

impl Args<'_> {
    fn id(&self, key: &str) -> Option<String> {
        match self.0.get(key)? {
            Value::String(s) => Some(s.trim().to_owned()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        }
    }

    fn int(&self, key: &str) -> Option<usize> {
        self.0.get(key).and_then(Value::as_u64).map(|n| n as usize)
    }

    fn user(&self, ctx: Option<&ToolContext>) -> Result<UserId, String> {
        match (self.id("user_id"), ctx) {
            (Some(u), _) => Ok(UserId::new(u.strip_prefix("user:").unwrap_or(&u))),
            (None, Some(c)) => Ok(c.user.clone()),
            (None, None) => Err("missing required argument 'user_id' (no active task to default to)".into()),
        }
    }
}

pub fn render_history(page: &HistoryPage, total: usize) -> String {
    let mut out = format!(
        "tool: user_history_search\nuser: {}\npage: {}\nhistory length: {total}\nexhausted: {}\n",
        page.user.tagged(),
        page.page_index,
        page.exhausted
    );
    if page.items.is_empty() {
        out.push_str("items: none (past the start of the history)");
        return out;
    }
    out.push_str("items (oldest first):\n");
    for e in &page.items {
        let _ = writeln!(out, "- {} | {} | {} | rating {}", e.item.tagged(), e.title, e.category, e.rating);
    }
    out.trim_end().to_owned()
}

/// The card leaves out the queried identifier; the policy already knows it.
pub fn render_item_card(card: &ItemCard, catalog: &ItemCatalog) -> String {
    let mut out = String::from("tool: item_info_search\n");
    for (k, v) in &card.attributes {
        let _ = writeln!(out, "{k}: {v}");
    }
    if card.related.is_empty() {
        out.push_str("related items: none");
        return out;
    }
    out.push_str("related items:\n");
    for r in &card.related {
        let labels: Vec<&str> = r.relations.iter().map(|t| t.label()).collect();
        let _ = writeln!(
            out,
            "- {} | {} | {} | score {}",
            r.item.tagged(),
            catalog.title(&r.item),
            labels.join(", "),
            r.score
        );
    }
    out.trim_end().to_owned()
}
