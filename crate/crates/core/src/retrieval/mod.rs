//! User–user similarity: sparse co-occurrence, dense profile embeddings and
//! their affine blend.

mod embed;

pub use embed::{
    embed_profile, CachedEmbedder, EmbeddingCache, EmbeddingProvider, HashingEmbedder,
    RemoteEmbedder, RemoteEmbedderConfig, HASHING_DIM,
};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEmbedding {
    pub user: UserId,
    pub vector: Vec<f64>,
    pub provider_tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridConfig {
    /// Weight of the sparse component, in [0, 1].
    pub alpha: f64,
    pub top_k: usize,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig { alpha: 0.5, top_k: 5 }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

/// |I_u ∩ I_v| / sqrt(|I_u| |I_v|)
pub fn sparse_similarity(a: &HashSet<ItemId>, b: &HashSet<ItemId>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("item set"));
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let common = small.iter().filter(|i| large.contains(*i)).count();
    Ok(common as f64 / ((a.len() * b.len()) as f64).sqrt())
}

/// Cosine similarity.
pub fn dense_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn hybrid_similarity(sparse: f64, dense: f64, alpha: f64) -> f64 {
    alpha * sparse + (1.0 - alpha) * dense
}

fn sorted_sets<S: serde::Serializer>(sets: &BTreeMap<UserId, HashSet<ItemId>>, s: S) -> Result<S::Ok, S::Error> {
    let sorted: BTreeMap<&UserId, std::collections::BTreeSet<&ItemId>> =
        sets.iter().map(|(u, items)| (u, items.iter().collect())).collect();
    sorted.serialize(s)
}

/// Item sets and profile embeddings for every indexed user.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityIndex {
    #[serde(serialize_with = "sorted_sets")]
    item_sets: BTreeMap<UserId, HashSet<ItemId>>,
    embeddings: BTreeMap<UserId, Vec<f64>>,
    provider_tag: String,
    dim: usize,
}

impl SimilarityIndex {
    /// Users with an empty item set or no embedding are left out.
    pub fn build(
        item_sets: BTreeMap<UserId, HashSet<ItemId>>,
        embeddings: Vec<ProfileEmbedding>,
    ) -> Result<Self> {
        let mut index = SimilarityIndex::default();
        for e in embeddings {
            if index.embeddings.is_empty() {
                index.provider_tag = e.provider_tag.clone();
                index.dim = e.vector.len();
            } else if e.provider_tag != index.provider_tag {
                return Err(Error::InvalidArgument(format!(
                    "mixed embedding providers: {} and {}",
                    index.provider_tag, e.provider_tag
                )));
            } else if e.vector.len() != index.dim {
                return Err(Error::DimensionMismatch {
                    expected: index.dim,
                    actual: e.vector.len(),
                });
            }
            if e.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite embedding for {}", e.user)));
            }
            index.embeddings.insert(e.user, e.vector);
        }
        index.item_sets = item_sets
            .into_iter()
            .filter(|(u, s)| !s.is_empty() && index.embeddings.contains_key(u))
            .collect();
        index.embeddings.retain(|u, _| index.item_sets.contains_key(u));
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.item_sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_sets.is_empty()
    }

    pub fn contains(&self, user: &UserId) -> bool {
        self.item_sets.contains_key(user)
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn sparse(&self, u: &UserId, v: &UserId) -> Result<f64> {
        sparse_similarity(self.items_of(u)?, self.items_of(v)?)
    }

    pub fn dense(&self, u: &UserId, v: &UserId) -> Result<f64> {
        dense_similarity(self.embedding_of(u)?, self.embedding_of(v)?)
    }

    pub fn hybrid(&self, u: &UserId, v: &UserId, alpha: f64) -> Result<f64> {
        Ok(hybrid_similarity(self.sparse(u, v)?, self.dense(u, v)?, alpha))
    }

    fn items_of(&self, u: &UserId) -> Result<&HashSet<ItemId>> {
        self.item_sets.get(u).ok_or_else(|| Error::UnknownUser(u.to_string()))
    }

    fn embedding_of(&self, u: &UserId) -> Result<&[f64]> {
        self.embeddings
            .get(u)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownUser(u.to_string()))
    }

    /// The `k` users most similar to `u` by hybrid score, excluding `u`;
    /// ties go to the smaller identifier.
    pub fn top_similar_users(&self, u: &UserId, k: usize, alpha: f64) -> Result<Vec<(UserId, f64)>> {
        self.items_of(u)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
        }
        let mut scored = self
            .item_sets
            .keys()
            .filter(|v| *v != u)
            .map(|v| Ok((v.clone(), self.hybrid(u, v, alpha)?)))
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }
}
