use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::ItemCatalog;
use crate::error::{Error, Result};
use crate::ids::ItemId;

/// Two items rated by one user within this many consecutive interactions are
/// linked as `also_viewed` when the catalog has no link metadata.
pub const CO_VIEW_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationType {
    AlsoBought,
    AlsoViewed,
    SameCategory,
    SameBrand,
}

impl RelationType {
    pub const ALL: [RelationType; 4] = [
        RelationType::AlsoBought,
        RelationType::AlsoViewed,
        RelationType::SameCategory,
        RelationType::SameBrand,
    ];

    fn bit(self) -> u8 {
        1 << self as u8
    }

    /// Phrase shown to the policy next to a related item.
    pub fn label(self) -> &'static str {
        match self {
            RelationType::AlsoBought => "often bought together",
            RelationType::AlsoViewed => "often viewed together",
            RelationType::SameCategory => "same category",
            RelationType::SameBrand => "same brand",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelationType::AlsoBought => "also_bought",
            RelationType::AlsoViewed => "also_viewed",
            RelationType::SameCategory => "same_category",
            RelationType::SameBrand => "same_brand",
        })
    }
}

pub fn relation_weight(r: RelationType) -> u32 {
    match r {
        RelationType::AlsoBought => 3,
        RelationType::AlsoViewed => 2,
        RelationType::SameCategory | RelationType::SameBrand => 1,
    }
}

/// Set of relations connecting two items.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct RelationSet(u8);

impl RelationSet {
    pub fn empty() -> Self {
        RelationSet(0)
    }

    pub fn insert(&mut self, r: RelationType) {
        self.0 |= r.bit();
    }

    pub fn contains(&self, r: RelationType) -> bool {
        self.0 & r.bit() != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = RelationType> + '_ {
        RelationType::ALL.into_iter().filter(|r| self.contains(*r))
    }

    pub fn score(&self) -> u32 {
        self.iter().map(relation_weight).sum()
    }

    pub fn union(self, other: RelationSet) -> RelationSet {
        RelationSet(self.0 | other.0)
    }
}

impl FromIterator<RelationType> for RelationSet {
    fn from_iter<I: IntoIterator<Item = RelationType>>(iter: I) -> Self {
        let mut s = RelationSet::empty();
        for r in iter {
            s.insert(r);
        }
        s
    }
}

impl fmt::Debug for RelationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for RelationSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for RelationSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Vec::<RelationType>::deserialize(d)?.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelatedItem {
    pub item: ItemId,
    pub score: u32,
    pub relations: RelationSet,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphBuildReport {
    pub items: usize,
    pub link_edges: usize,
    /// Link targets missing from the catalog; skipped.
    pub dangling: usize,
}

/// Weighted item–item relations.
///
/// Co-purchase and co-view links are stored explicitly and symmetrized.
/// Category and brand relations are implied by the attribute indexes, which
/// keeps the graph linear in the catalog size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "GraphData", into = "GraphData")]
pub struct ItemRelationGraph {
    items: BTreeSet<ItemId>,
    links: BTreeMap<ItemId, BTreeMap<ItemId, RelationSet>>,
    categories: BTreeMap<ItemId, Vec<String>>,
    brands: BTreeMap<ItemId, String>,
    by_category: BTreeMap<String, Vec<ItemId>>,
    by_brand: BTreeMap<String, Vec<ItemId>>,
}

#[derive(Serialize, Deserialize)]
struct GraphData {
    items: Vec<ItemId>,
    links: Vec<(ItemId, ItemId, RelationSet)>,
    categories: BTreeMap<ItemId, Vec<String>>,
    brands: BTreeMap<ItemId, String>,
}

impl From<ItemRelationGraph> for GraphData {
    fn from(g: ItemRelationGraph) -> Self {
        let links = g
            .links
            .iter()
            .flat_map(|(a, nbrs)| {
                nbrs.iter()
                    .filter(move |(b, _)| a < *b)
                    .map(move |(b, r)| (a.clone(), b.clone(), *r))
            })
            .collect();
        GraphData {
            items: g.items.into_iter().collect(),
            links,
            categories: g.categories,
            brands: g.brands,
        }
    }
}

impl From<GraphData> for ItemRelationGraph {
    fn from(d: GraphData) -> Self {
        let mut g = ItemRelationGraph {
            items: d.items.into_iter().collect(),
            links: BTreeMap::new(),
            categories: d.categories,
            brands: d.brands,
            by_category: BTreeMap::new(),
            by_brand: BTreeMap::new(),
        };
        for (a, b, rels) in d.links {
            for r in rels.iter() {
                g.link(&a, &b, r);
            }
        }
        g.index_attributes();
        g
    }
}

impl ItemRelationGraph {
    fn link(&mut self, a: &ItemId, b: &ItemId, r: RelationType) {
        self.links.entry(a.clone()).or_default().entry(b.clone()).or_default().insert(r);
        self.links.entry(b.clone()).or_default().entry(a.clone()).or_default().insert(r);
    }

    fn index_attributes(&mut self) {
        self.by_category.clear();
        self.by_brand.clear();
        for (item, cats) in &self.categories {
            for c in cats {
                self.by_category.entry(c.clone()).or_default().push(item.clone());
            }
        }
        for (item, brand) in &self.brands {
            self.by_brand.entry(brand.clone()).or_default().push(item.clone());
        }
    }

    pub fn contains(&self, item: &ItemId) -> bool {
        self.items.contains(item)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &ItemId> + '_ {
        self.items.iter()
    }

    fn check(&self, item: &ItemId) -> Result<()> {
        if self.items.contains(item) {
            Ok(())
        } else {
            Err(Error::UnknownItem(item.to_string()))
        }
    }

    /// All relations between two distinct items (empty when unrelated).
    pub fn relations(&self, i: &ItemId, j: &ItemId) -> Result<RelationSet> {
        self.check(i)?;
        self.check(j)?;
        if i == j {
            return Ok(RelationSet::empty());
        }
        let mut rels = self
            .links
            .get(i)
            .and_then(|n| n.get(j))
            .copied()
            .unwrap_or_default();
        if let (Some(ci), Some(cj)) = (self.categories.get(i), self.categories.get(j)) {
            if ci.iter().any(|c| cj.contains(c)) {
                rels.insert(RelationType::SameCategory);
            }
        }
        if let (Some(bi), Some(bj)) = (self.brands.get(i), self.brands.get(j)) {
            if bi == bj {
                rels.insert(RelationType::SameBrand);
            }
        }
        Ok(rels)
    }

    /// s(i, j): sum of relation weights; 0 when unrelated.
    pub fn item_score(&self, i: &ItemId, j: &ItemId) -> Result<u32> {
        Ok(self.relations(i, j)?.score())
    }

    /// Every item sharing at least one relation with `i`.
    fn neighbor_ids(&self, i: &ItemId) -> BTreeSet<&ItemId> {
        let mut out: BTreeSet<&ItemId> = BTreeSet::new();
        if let Some(n) = self.links.get(i) {
            out.extend(n.keys());
        }
        for c in self.categories.get(i).into_iter().flatten() {
            out.extend(self.by_category.get(c).into_iter().flatten());
        }
        if let Some(b) = self.brands.get(i) {
            out.extend(self.by_brand.get(b).into_iter().flatten());
        }
        out.remove(i);
        out
    }

    /// Top-`k` neighbors by score, ties broken by ascending identifier.
    pub fn related_items(&self, i: &ItemId, k: usize) -> Result<Vec<RelatedItem>> {
        self.related_items_excluding(i, k, &HashSet::new())
    }

    pub fn related_items_excluding(
        &self,
        i: &ItemId,
        k: usize,
        exclude: &HashSet<ItemId>,
    ) -> Result<Vec<RelatedItem>> {
        self.check(i)?;
        if k == 0 {
            return Err(Error::InvalidArgument("K must be >= 1".into()));
        }
        let mut scored: Vec<RelatedItem> = self
            .neighbor_ids(i)
            .into_iter()
            .filter(|j| !exclude.contains(*j))
            .map(|j| {
                let relations = self.relations(i, j).expect("neighbor ids are graph members");
                RelatedItem {
                    item: j.clone(),
                    score: relations.score(),
                    relations,
                }
            })
            .collect();
        scored.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.item.cmp(&b.item)));
        scored.truncate(k);
        Ok(scored)
    }

    /// Every related pair `(a, b)` with `a < b`. Quadratic; meant for audits
    /// and small graphs.
    pub fn edges(&self) -> Vec<(ItemId, ItemId, RelationSet)> {
        let mut out = Vec::new();
        for a in &self.items {
            for b in self.neighbor_ids(a) {
                if a < b {
                    let r = self.relations(a, b).expect("members");
                    out.push((a.clone(), b.clone(), r));
                }
            }
        }
        out
    }
}

/// Builds the relation graph over every catalog item.
///
/// `also_bought`/`also_viewed` come from catalog links. When the catalog has
/// no links at all (movie data), `sessions` supplies chronological item lists
/// whose items within a [`CO_VIEW_WINDOW`] are linked as `also_viewed`.
pub fn build_item_relation_graph(
    catalog: &ItemCatalog,
    sessions: Option<&[Vec<ItemId>]>,
) -> (ItemRelationGraph, GraphBuildReport) {
    let mut g = ItemRelationGraph {
        items: catalog.items.keys().cloned().collect(),
        links: BTreeMap::new(),
        categories: BTreeMap::new(),
        brands: BTreeMap::new(),
        by_category: BTreeMap::new(),
        by_brand: BTreeMap::new(),
    };
    let mut report = GraphBuildReport {
        items: g.items.len(),
        ..GraphBuildReport::default()
    };

    for meta in catalog.items.values() {
        if !meta.categories.is_empty() {
            g.categories.insert(meta.item.clone(), meta.categories.clone());
        }
        if let Some(b) = &meta.brand {
            g.brands.insert(meta.item.clone(), b.clone());
        }
        let links = meta
            .also_bought
            .iter()
            .map(|j| (j, RelationType::AlsoBought))
            .chain(meta.also_viewed.iter().map(|j| (j, RelationType::AlsoViewed)));
        for (j, r) in links {
            if !catalog.contains(j) {
                report.dangling += 1;
                continue;
            }
            if *j != meta.item {
                g.link(&meta.item, j, r);
            }
        }
    }

    if !catalog.has_link_metadata() {
        for session in sessions.into_iter().flatten() {
            for (p, a) in session.iter().enumerate() {
                for b in session.iter().skip(p + 1).take(CO_VIEW_WINDOW - 1) {
                    if a != b && catalog.contains(a) && catalog.contains(b) {
                        g.link(a, b, RelationType::AlsoViewed);
                    }
                }
            }
        }
    }

    if report.dangling > 0 {
        tracing::warn!(dangling = report.dangling, "skipped links to items missing from the catalog");
    }
    report.link_edges = g.links.values().map(BTreeMap::len).sum::<usize>() / 2;
    g.index_attributes();
    (g, report)
}
