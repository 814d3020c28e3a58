use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{BehaviorSequence, Demographics, ItemCatalog};
use crate::error::{Error, Result};
use crate::graphs::snapshot;
use crate::ids::UserId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user: UserId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<String>,
    pub summary: String,
    /// Demographics (when present) followed by the summary.
    pub rendered: String,
}

impl UserProfile {
    pub fn new(user: UserId, demographics: Option<String>, summary: String) -> Self {
        let rendered = match &demographics {
            Some(d) => format!("{d}\n{summary}"),
            None => summary.clone(),
        };
        UserProfile {
            user,
            demographics,
            summary,
            rendered,
        }
    }
}

/// Produces the preference summary from a summarization prompt.
pub trait Summarizer: Send + Sync {
    fn summarize(&self, prompt: &str) -> Result<String>;
}

pub enum ProfileBackend<'a> {
    /// Deterministic summary listing the most frequent categories.
    Template,
    Model(&'a dyn Summarizer),
}

pub const PROFILE_INSTRUCTIONS: &str = "Summarize this user's long-term preferences and behavior patterns \
in at most five sentences. Mention favored categories, typical ratings and any shift in taste over time. \
Do not list item identifiers.";

pub fn profile_prompt(history: &BehaviorSequence, catalog: &ItemCatalog) -> String {
    let mut prompt = format!("{PROFILE_INSTRUCTIONS}\n\nInteraction history (oldest first):\n");
    for e in &history.items {
        let (title, cat) = catalog
            .get(&e.item)
            .map(|m| (m.title.as_str(), m.categories.join(" | ")))
            .unwrap_or(("(untitled)", String::new()));
        prompt.push_str(&format!("- {title} | {cat} | rating {}\n", e.rating));
    }
    prompt
}

/// Top categories by frequency (ties by name), with counts.
pub fn category_frequencies(history: &BehaviorSequence, catalog: &ItemCatalog) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &history.items {
        for c in catalog.get(&e.item).into_iter().flat_map(|m| m.categories.iter()) {
            *counts.entry(c.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().map(|(c, n)| (c.to_owned(), n)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

fn template_summary(history: &BehaviorSequence, catalog: &ItemCatalog) -> String {
    let n = history.len();
    let top: Vec<String> = category_frequencies(history, catalog)
        .into_iter()
        .take(3)
        .map(|(c, k)| format!("{c} ({k} of {n} items)"))
        .collect();
    let mean = history.items.iter().map(|e| e.rating).sum::<f64>() / n as f64;
    let recent: Vec<String> = history
        .items
        .iter()
        .rev()
        .take(3)
        .map(|e| format!("\"{}\"", catalog.title(&e.item)))
        .collect();
    let mut s = if top.is_empty() {
        "Long-term preferences: no category information.".to_string()
    } else {
        format!("Long-term preferences: {}.", top.join(", "))
    };
    s.push_str(&format!(" Average rating {mean:.2} over {n} liked items."));
    if !recent.is_empty() {
        s.push_str(&format!(" Most recently liked: {}.", recent.join(", ")));
    }
    s
}

/// Builds one user's profile from the training part of their history.
pub fn generate_profile(
    backend: &ProfileBackend<'_>,
    user: &UserId,
    history: &BehaviorSequence,
    demographics: Option<&Demographics>,
    catalog: &ItemCatalog,
) -> Result<UserProfile> {
    if history.is_empty() {
        return Err(Error::Empty("history"));
    }
    let summary = match backend {
        ProfileBackend::Template => template_summary(history, catalog),
        ProfileBackend::Model(m) => m.summarize(&profile_prompt(history, catalog))?.trim().to_owned(),
    };
    if summary.is_empty() {
        return Err(Error::Empty("profile summary"));
    }
    Ok(UserProfile::new(user.clone(), demographics.map(ToString::to_string), summary))
}

pub const PROFILES_KIND: &str = "profiles";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileStore {
    pub profiles: BTreeMap<UserId, UserProfile>,
}

impl ProfileStore {
    pub fn get(&self, user: &UserId) -> Option<&UserProfile> {
        self.profiles.get(user)
    }

    pub fn insert(&mut self, p: UserProfile) {
        self.profiles.insert(p.user.clone(), p);
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        snapshot::save(path, PROFILES_KIND, self)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        snapshot::load(path, PROFILES_KIND)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ItemMeta, SeqEntry};

    fn fixture() -> (BehaviorSequence, ItemCatalog) {
        let cats = ["Jazz", "Rock", "Jazz", "Blues", "Jazz", "Rock"];
        let catalog = ItemCatalog {
            items: cats
                .iter()
                .enumerate()
                .map(|(n, c)| {
                    let id = format!("i{n}");
                    (
                        id.as_str().into(),
                        ItemMeta {
                            item: id.as_str().into(),
                            title: format!("Album {n}"),
                            categories: vec![c.to_string()],
                            ..ItemMeta::default()
                        },
                    )
                })
                .collect(),
        };
        let seq = BehaviorSequence {
            user: "u".into(),
            items: (0..cats.len())
                .map(|n| SeqEntry {
                    item: format!("i{n}").into(),
                    rating: 5.0,
                    timestamp: n as i64,
                })
                .collect(),
        };
        (seq, catalog)
    }

    #[test]
    fn demographics_lead_the_rendered_profile() {
        let (seq, cat) = fixture();
        let d = Demographics {
            gender: "F".into(),
            age: 25,
            occupation: "artist".into(),
        };
        let p = generate_profile(&ProfileBackend::Template, &"u".into(), &seq, Some(&d), &cat).unwrap();
        assert!(p.rendered.starts_with("F, 25, artist"));
        assert!(p.rendered.ends_with(&p.summary));
    }

    #[test]
    fn summary_alone_without_demographics() {
        let (seq, cat) = fixture();
        let p = generate_profile(&ProfileBackend::Template, &"u".into(), &seq, None, &cat).unwrap();
        assert_eq!(p.rendered, p.summary);
    }

    #[test]
    fn dominant_category_is_named_first() {
        let (seq, cat) = fixture();
        // oracle: count by hand
        let mut counts = BTreeMap::new();
        for e in &seq.items {
            *counts.entry(cat.get(&e.item).unwrap().categories[0].clone()).or_insert(0) += 1;
        }
        let (top, _) = counts.iter().max_by_key(|(_, n)| **n).unwrap();
        let p = generate_profile(&ProfileBackend::Template, &"u".into(), &seq, None, &cat).unwrap();
        assert_eq!(top, "Jazz");
        assert!(p.summary.starts_with("Long-term preferences: Jazz (3 of 6 items)"), "{}", p.summary);
    }

    #[test]
    fn empty_history_is_an_error() {
        let (_, cat) = fixture();
        let empty = BehaviorSequence {
            user: "u".into(),
            items: vec![],
        };
        assert!(generate_profile(&ProfileBackend::Template, &"u".into(), &empty, None, &cat).is_err());
    }

    struct Echo;
    impl Summarizer for Echo {
        fn summarize(&self, prompt: &str) -> Result<String> {
            Ok(format!("  saw {} lines  ", prompt.lines().count()))
        }
    }

    #[test]
    fn model_backend_is_trimmed() {
        let (seq, cat) = fixture();
        let p = generate_profile(&ProfileBackend::Model(&Echo), &"u".into(), &seq, None, &cat).unwrap();
        assert!(p.summary.starts_with("saw "));
    }
}
