use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{Demographics, ItemCatalog};
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};
use crate::seed;

/// Enumeration cap per hop class (2-hop, 3-hop) before sampling.
pub const MAX_PATHS_PER_HOP_CLASS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KgNode {
    User(UserId),
    Item(ItemId),
    /// Demographic group `gender|age|occupation`.
    Group(String),
}

impl fmt::Display for KgNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KgNode::User(u) => f.write_str(&u.tagged()),
            KgNode::Item(i) => f.write_str(&i.tagged()),
            KgNode::Group(g) => write!(f, "group:{g}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Buy,
    BoughtBy,
    AlsoBought,
    InGroup,
    GroupMember,
}

impl EdgeKind {
    pub fn inverse(self) -> EdgeKind {
        match self {
            EdgeKind::Buy => EdgeKind::BoughtBy,
            EdgeKind::BoughtBy => EdgeKind::Buy,
            EdgeKind::AlsoBought => EdgeKind::AlsoBought,
            EdgeKind::InGroup => EdgeKind::GroupMember,
            EdgeKind::GroupMember => EdgeKind::InGroup,
        }
    }
}

/// Heterogeneous graph over users, items and demographic groups.
/// Every edge is stored together with its inverse.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "KgData", into = "KgData")]
pub struct KnowledgeGraph {
    adjacency: BTreeMap<KgNode, BTreeSet<(EdgeKind, KgNode)>>,
    item_titles: BTreeMap<ItemId, String>,
}

#[derive(Serialize, Deserialize)]
struct KgData {
    nodes: Vec<KgNode>,
    edges: Vec<(KgNode, EdgeKind, KgNode)>,
    item_titles: BTreeMap<ItemId, String>,
}

impl From<KnowledgeGraph> for KgData {
    fn from(kg: KnowledgeGraph) -> Self {
        let edges = kg
            .adjacency
            .iter()
            .flat_map(|(from, out)| out.iter().map(move |(k, to)| (from.clone(), *k, to.clone())))
            // keep one direction; the inverse is restored on load
            .filter(|(a, k, b)| match k {
                EdgeKind::Buy | EdgeKind::InGroup => true,
                EdgeKind::AlsoBought => a < b,
                _ => false,
            })
            .collect::<Vec<_>>();
        KgData {
            nodes: kg.adjacency.keys().cloned().collect(),
            edges,
            item_titles: kg.item_titles,
        }
    }
}

impl From<KgData> for KnowledgeGraph {
    fn from(d: KgData) -> Self {
        let mut kg = KnowledgeGraph {
            adjacency: d.nodes.into_iter().map(|n| (n, BTreeSet::new())).collect(),
            item_titles: d.item_titles,
        };
        for (a, k, b) in d.edges {
            kg.add_edge(a, k, b);
        }
        kg
    }
}

impl KnowledgeGraph {
    fn add_node(&mut self, n: KgNode) {
        self.adjacency.entry(n).or_default();
    }

    fn add_edge(&mut self, a: KgNode, kind: EdgeKind, b: KgNode) {
        self.adjacency.entry(b.clone()).or_default().insert((kind.inverse(), a.clone()));
        self.adjacency.entry(a).or_default().insert((kind, b));
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Directed edge count (each relation is counted in both directions).
    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum()
    }

    pub fn contains(&self, n: &KgNode) -> bool {
        self.adjacency.contains_key(n)
    }

    pub fn has_edge(&self, a: &KgNode, kind: EdgeKind, b: &KgNode) -> bool {
        self.adjacency
            .get(a)
            .is_some_and(|out| out.contains(&(kind, b.clone())))
    }

    pub fn neighbors(&self, n: &KgNode, kind: EdgeKind) -> impl Iterator<Item = &KgNode> + '_ {
        self.adjacency
            .get(n)
            .into_iter()
            .flatten()
            .filter(move |(k, _)| *k == kind)
            .map(|(_, to)| to)
    }

    pub fn count_edges(&self, kind: EdgeKind) -> usize {
        self.adjacency
            .values()
            .flatten()
            .filter(|(k, _)| *k == kind)
            .count()
    }

    pub fn item_title(&self, item: &ItemId) -> Option<&str> {
        self.item_titles.get(item).map(String::as_str)
    }
}

/// Builds the graph from per-user positive items, optional demographics and
/// catalog co-purchase links. Links to items absent from the catalog are
/// dropped.
pub fn build_knowledge_graph<'a>(
    user_items: impl IntoIterator<Item = (&'a UserId, &'a [ItemId])>,
    demographics: &BTreeMap<UserId, Demographics>,
    catalog: &ItemCatalog,
) -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::default();
    for meta in catalog.items.values() {
        kg.add_node(KgNode::Item(meta.item.clone()));
        kg.item_titles.insert(meta.item.clone(), meta.title.clone());
    }
    for (user, items) in user_items {
        kg.add_node(KgNode::User(user.clone()));
        for item in items {
            kg.add_edge(KgNode::User(user.clone()), EdgeKind::Buy, KgNode::Item(item.clone()));
        }
        if let Some(d) = demographics.get(user) {
            kg.add_edge(KgNode::User(user.clone()), EdgeKind::InGroup, KgNode::Group(d.group_key()));
        }
    }
    for meta in catalog.items.values() {
        for other in &meta.also_bought {
            if other != &meta.item && catalog.contains(other) {
                kg.add_edge(
                    KgNode::Item(meta.item.clone()),
                    EdgeKind::AlsoBought,
                    KgNode::Item(other.clone()),
                );
            }
        }
    }
    kg
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgPath {
    pub nodes: Vec<KgNode>,
    pub edges: Vec<EdgeKind>,
}

impl KgPath {
    pub fn hops(&self) -> usize {
        self.edges.len()
    }

    pub fn terminal_user(&self) -> Option<&UserId> {
        match self.nodes.last() {
            Some(KgNode::User(u)) => Some(u),
            _ => None,
        }
    }

    pub fn items(&self) -> impl Iterator<Item = &ItemId> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            KgNode::Item(i) => Some(i),
            _ => None,
        })
    }

    /// Replays the path edge by edge against `kg`.
    pub fn is_valid_in(&self, kg: &KnowledgeGraph) -> bool {
        self.nodes.len() == self.edges.len() + 1
            && self
                .edges
                .iter()
                .enumerate()
                .all(|(t, k)| kg.has_edge(&self.nodes[t], *k, &self.nodes[t + 1]))
    }

    pub fn explain(&self, kg: &KnowledgeGraph) -> String {
        let title = |n: &KgNode| match n {
            KgNode::Item(i) => match kg.item_title(i) {
                Some(t) if !t.is_empty() => format!("{} (\"{t}\")", i.tagged()),
                _ => i.tagged(),
            },
            other => other.to_string(),
        };
        let (u, v) = (&self.nodes[0], &self.nodes[self.nodes.len() - 1]);
        match self.edges.as_slice() {
            [EdgeKind::Buy, EdgeKind::BoughtBy] => format!(
                "{u} may share interests with {v}: both purchased {}.",
                title(&self.nodes[1])
            ),
            [EdgeKind::InGroup, EdgeKind::GroupMember] => format!(
                "{u} may share interests with {v}: they belong to the same age, gender and occupation group ({}).",
                match &self.nodes[1] {
                    KgNode::Group(g) => g.replace('|', ", "),
                    other => other.to_string(),
                }
            ),
            [EdgeKind::Buy, EdgeKind::AlsoBought, EdgeKind::BoughtBy] => format!(
                "{u} may share interests with {v}: {u} purchased {}, {v} purchased {}, and the two are often bought together.",
                title(&self.nodes[1]),
                title(&self.nodes[2])
            ),
            _ => format!(
                "{u} is connected to {v} via {}.",
                self.nodes.iter().map(ToString::to_string).collect::<Vec<_>>().join(" -> ")
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KgEvidence {
    pub paths: Vec<KgPath>,
    pub explanations: Vec<String>,
    /// Rendered profiles of terminal users, attached by the toolbox.
    #[serde(default)]
    pub profiles: BTreeMap<UserId, String>,
}

impl KgEvidence {
    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn terminal_users(&self) -> BTreeSet<&UserId> {
        self.paths.iter().filter_map(KgPath::terminal_user).collect()
    }
}

/// All 2-hop and 3-hop paths from `user` that avoid `exclude`, each class
/// capped at [`MAX_PATHS_PER_HOP_CLASS`], in deterministic order.
pub fn enumerate_paths(
    kg: &KnowledgeGraph,
    user: &UserId,
    exclude: &HashSet<ItemId>,
) -> (Vec<KgPath>, Vec<KgPath>) {
    let start = KgNode::User(user.clone());
    let allowed = |n: &KgNode| match n {
        KgNode::Item(i) => !exclude.contains(i),
        _ => true,
    };
    let is_other_user = |n: &KgNode| matches!(n, KgNode::User(v) if v != user);
    let cap = MAX_PATHS_PER_HOP_CLASS;

    let mut two = Vec::new();
    'two: for (first, second) in [
        (EdgeKind::Buy, EdgeKind::BoughtBy),
        (EdgeKind::InGroup, EdgeKind::GroupMember),
    ] {
        for mid in kg.neighbors(&start, first).filter(|n| allowed(n)) {
            for end in kg.neighbors(mid, second).filter(|n| is_other_user(n)) {
                if two.len() >= cap {
                    break 'two;
                }
                two.push(KgPath {
                    nodes: vec![start.clone(), mid.clone(), end.clone()],
                    edges: vec![first, second],
                });
            }
        }
    }

    let mut three = Vec::new();
    'three: for i in kg.neighbors(&start, EdgeKind::Buy).filter(|n| allowed(n)) {
        for j in kg.neighbors(i, EdgeKind::AlsoBought).filter(|n| allowed(n)) {
            for end in kg.neighbors(j, EdgeKind::BoughtBy).filter(|n| is_other_user(n)) {
                if three.len() >= cap {
                    break 'three;
                }
                three.push(KgPath {
                    nodes: vec![start.clone(), i.clone(), j.clone(), end.clone()],
                    edges: vec![EdgeKind::Buy, EdgeKind::AlsoBought, EdgeKind::BoughtBy],
                });
            }
        }
    }
    (two, three)
}

fn sample<T: Clone>(pool: &[T], k: usize, seed: u64) -> Vec<T> {
    if pool.len() <= k {
        return pool.to_vec();
    }
    let mut picked = index::sample(&mut seed::rng(seed), pool.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool[i].clone()).collect()
}

/// Samples up to `k1` two-hop and `k2` three-hop paths uniformly without
/// replacement. Fewer available paths is not an error.
pub fn sample_kg_evidence(
    kg: &KnowledgeGraph,
    user: &UserId,
    k1: usize,
    k2: usize,
    seed: u64,
    exclude: &HashSet<ItemId>,
) -> Result<KgEvidence> {
    if k1 >= k2 {
        return Err(Error::InvalidArgument(format!("k1 ({k1}) must be smaller than k2 ({k2})")));
    }
    if !kg.contains(&KgNode::User(user.clone())) {
        return Err(Error::UnknownUser(user.to_string()));
    }
    let (two, three) = enumerate_paths(kg, user, exclude);
    let mut paths = sample(&two, k1, seed::derive(seed, "kg:2hop", 0));
    paths.extend(sample(&three, k2, seed::derive(seed, "kg:3hop", 0)));
    let explanations = paths.iter().map(|p| p.explain(kg)).collect();
    Ok(KgEvidence {
        paths,
        explanations,
        profiles: BTreeMap::new(),
    })
}
