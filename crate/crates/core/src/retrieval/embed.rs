use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ProfileEmbedding;
use crate::error::{Error, Result};
use crate::ids::UserId;
use crate::retry::{self, Attempt, InFlight, RetryPolicy};
use crate::seed::fnv1a;
use crate::{graphs::snapshot::sha256_hex, jsonl};

pub const HASHING_DIM: usize = 64;

/// Turns texts into fixed-dimension vectors.
pub trait EmbeddingProvider: Send + Sync {
    /// Identifies the model; embeddings from different tags never mix.
    fn tag(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Seeded feature hashing of character trigrams, L2-normalized.
///
/// Deterministic and network-free; a stand-in for a real encoder in tests
/// and offline runs.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    pub seed: u64,
    pub dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder {
            seed: 0,
            dim: HASHING_DIM,
        }
    }
}

impl HashingEmbedder {
    fn embed_one(&self, text: &str) -> Vec<f64> {
        let chars: Vec<char> = format!(" {} ", text.to_lowercase()).chars().collect();
        let mut v = vec![0.0; self.dim];
        let seed = self.seed.to_le_bytes();
        for gram in chars.windows(3) {
            let mut bytes = seed.to_vec();
            bytes.extend(gram.iter().collect::<String>().as_bytes());
            let h = fnv1a(&bytes);
            let slot = (h % self.dim as u64) as usize;
            v[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn tag(&self) -> String {
        format!("hashing-trigram-{}-s{}", self.dim, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteEmbedderConfig {
    /// Full endpoint URL accepting `{"texts": [...]}`.
    pub url: String,
    pub model: Option<String>,
    pub dim: usize,
    /// Environment variable holding a bearer token, if any.
    pub api_key_env: Option<String>,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for RemoteEmbedderConfig {
    fn default() -> Self {
        RemoteEmbedderConfig {
            url: "http://127.0.0.1:8081/embeddings".into(),
            model: None,
            dim: 1024,
            api_key_env: None,
            batch_size: 32,
            max_in_flight: 4,
            timeout_secs: 30,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Calls an embeddings endpoint over HTTP in batches.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    client: reqwest::blocking::Client,
    gate: InFlight,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(RemoteEmbedder {
            gate: InFlight::new(config.max_in_flight),
            config,
            client,
        })
    }

    fn post_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let token = self
            .config
            .api_key_env
            .as_deref()
            .and_then(|k| std::env::var(k).ok());
        let body = EmbedRequest {
            texts,
            model: self.config.model.as_deref(),
        };
        let url = &self.config.url;
        let result = retry::with_backoff(&self.config.retry, |_| {
            let _slot = self.gate.acquire();
            let mut req = self.client.post(url).json(&body);
            if let Some(t) = &token {
                req = req.bearer_auth(t);
            }
            let resp = req
                .send()
                .map_err(|e| Attempt::Retry(format!("{url}: {e}")))?;
            let status = resp.status();
            if status.is_server_error() || status.as_u16() == 429 {
                return Err(Attempt::Retry(format!("{url}: HTTP {status}")));
            }
            if !status.is_success() {
                return Err(Attempt::Fatal(format!("{url}: HTTP {status}")));
            }
            resp.json::<EmbedResponse>()
                .map_err(|e| Attempt::Fatal(format!("{url}: bad response body: {e}")))
        });
        let resp = result.map_err(|(e, attempts)| Error::Transport(format!("{e} (after {attempts} attempts)")))?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::Transport(format!(
                "{url}: asked for {} vectors, got {}",
                texts.len(),
                resp.vectors.len()
            )));
        }
        for v in &resp.vectors {
            if v.len() != self.config.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.config.dim,
                    actual: v.len(),
                });
            }
        }
        Ok(resp.vectors)
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn tag(&self) -> String {
        format!(
            "remote:{}:{}",
            self.config.url,
            self.config.model.as_deref().unwrap_or("default")
        )
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size.max(1)) {
            out.extend(self.post_batch(chunk)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    provider: String,
    text_hash: String,
    vector: Vec<f64>,
}

/// Vectors keyed by (provider tag, SHA-256 of the text).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingCache {
    entries: BTreeMap<(String, String), Vec<f64>>,
}

impl EmbeddingCache {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let records: Vec<CacheRecord> = jsonl::read(path)?;
        Ok(EmbeddingCache {
            entries: records
                .into_iter()
                .map(|r| ((r.provider, r.text_hash), r.vector))
                .collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write(
            path,
            self.entries.iter().map(|((provider, text_hash), vector)| CacheRecord {
                provider: provider.clone(),
                text_hash: text_hash.clone(),
                vector: vector.clone(),
            }),
        )
    }

    pub fn get(&self, provider: &str, text: &str) -> Option<&Vec<f64>> {
        self.entries.get(&(provider.to_owned(), sha256_hex(text.as_bytes())))
    }

    pub fn insert(&mut self, provider: &str, text: &str, vector: Vec<f64>) {
        self.entries
            .insert((provider.to_owned(), sha256_hex(text.as_bytes())), vector);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Wraps a provider with an [`EmbeddingCache`]; only misses reach the provider.
pub struct CachedEmbedder<P> {
    inner: P,
    cache: Mutex<EmbeddingCache>,
    misses: Mutex<usize>,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn new(inner: P, cache: EmbeddingCache) -> Self {
        CachedEmbedder {
            inner,
            cache: Mutex::new(cache),
            misses: Mutex::new(0),
        }
    }

    pub fn into_cache(self) -> EmbeddingCache {
        self.cache.into_inner().expect("cache lock poisoned")
    }

    /// Texts that had to be sent to the wrapped provider so far.
    pub fn misses(&self) -> usize {
        *self.misses.lock().expect("miss counter poisoned")
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn tag(&self) -> String {
        self.inner.tag()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let tag = self.inner.tag();
        let missing: Vec<String> = {
            let cache = self.cache.lock().expect("cache lock poisoned");
            let mut seen = HashMap::new();
            texts
                .iter()
                .filter(|t| cache.get(&tag, t).is_none() && seen.insert(t.as_str(), ()).is_none())
                .cloned()
                .collect()
        };
        if !missing.is_empty() {
            let vectors = self.inner.embed(&missing)?;
            *self.misses.lock().expect("miss counter poisoned") += missing.len();
            let mut cache = self.cache.lock().expect("cache lock poisoned");
            for (t, v) in missing.iter().zip(vectors) {
                cache.insert(&tag, t, v);
            }
        }
        let cache = self.cache.lock().expect("cache lock poisoned");
        Ok(texts
            .iter()
            .map(|t| cache.get(&tag, t).cloned().expect("filled above"))
            .collect())
    }
}

pub fn embed_profile(provider: &dyn EmbeddingProvider, user: &UserId, text: &str) -> Result<ProfileEmbedding> {
    if text.trim().is_empty() {
        return Err(Error::Empty("profile text"));
    }
    let vector = provider
        .embed(&[text.to_owned()])?
        .pop()
        .ok_or_else(|| Error::Transport("provider returned no vector".into()))?;
    if vector.len() != provider.dim() {
        return Err(Error::DimensionMismatch {
            expected: provider.dim(),
            actual: vector.len(),
        });
    }
    Ok(ProfileEmbedding {
        user: user.clone(),
        vector,
        provider_tag: provider.tag(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::dense_similarity;

    #[test]
    fn hashing_is_deterministic_and_unit_norm() {
        let p = HashingEmbedder::default();
        let a = embed_profile(&p, &"u".into(), "Enjoys jazz and blues").unwrap();
        let b = embed_profile(&p, &"u".into(), "Enjoys jazz and blues").unwrap();
        assert_eq!(a, b);
        let norm = a.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_eq!(a.vector.len(), HASHING_DIM);
    }

    #[test]
    fn distinct_texts_are_not_parallel() {
        let p = HashingEmbedder::default();
        let corpus = [
            "Prefers Jazz (5), Blues (2)",
            "Prefers Rock (4), Pop (3)",
            "Prefers Classical (6)",
            "M, 25, programmer\nPrefers Comedy (3), Drama (2)",
            "F, 35, artist\nPrefers Drama (7)",
            "x",
        ];
        let vs = p.embed(&corpus.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap();
        for i in 0..vs.len() {
            for j in (i + 1)..vs.len() {
                assert!(dense_similarity(&vs[i], &vs[j]).unwrap() < 1.0 - 1e-9, "{i} vs {j}");
            }
        }
    }

    #[test]
    fn empty_profile_is_rejected() {
        assert!(embed_profile(&HashingEmbedder::default(), &"u".into(), "  ").is_err());
    }

    #[test]
    fn cache_serves_hits_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let texts: Vec<String> = vec!["a b c".into(), "d e f".into(), "a b c".into()];
        let cached = CachedEmbedder::new(HashingEmbedder::default(), EmbeddingCache::default());
        let first = cached.embed(&texts).unwrap();
        assert_eq!(cached.misses(), 2);
        let again = cached.embed(&texts).unwrap();
        assert_eq!(cached.misses(), 2);
        assert_eq!(first, again);
        cached.into_cache().save(&path).unwrap();

        let reloaded = CachedEmbedder::new(HashingEmbedder::default(), EmbeddingCache::load(&path).unwrap());
        assert_eq!(reloaded.embed(&texts).unwrap(), first);
        assert_eq!(reloaded.misses(), 0);
    }
}
