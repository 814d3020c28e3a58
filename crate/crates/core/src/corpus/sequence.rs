use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Interaction;
use crate::ids::{ItemId, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqEntry {
    pub item: ItemId,
    pub rating: f64,
    pub timestamp: i64,
}

/// A user's positive interactions in chronological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSequence {
    pub user: UserId,
    pub items: Vec<SeqEntry>,
}

impl BehaviorSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &ItemId> + '_ {
        self.items.iter().map(|e| &e.item)
    }

    pub fn item_set(&self) -> HashSet<ItemId> {
        self.item_ids().cloned().collect()
    }

    pub fn prefix(&self, len: usize) -> BehaviorSequence {
        BehaviorSequence {
            user: self.user.clone(),
            items: self.items[..len].to_vec(),
        }
    }
}

/// Keeps interactions rated strictly above `positive_threshold`, groups them
/// per user and orders them by timestamp. Equal timestamps keep input order.
/// A repeated item keeps only its first positive occurrence so a held-out
/// item can never also sit in the training prefix.
pub fn build_sequences(
    interactions: &[Interaction],
    positive_threshold: f64,
) -> BTreeMap<UserId, BehaviorSequence> {
    let mut grouped: BTreeMap<UserId, Vec<SeqEntry>> = BTreeMap::new();
    for i in interactions.iter().filter(|i| i.rating > positive_threshold) {
        grouped.entry(i.user.clone()).or_default().push(SeqEntry {
            item: i.item.clone(),
            rating: i.rating,
            timestamp: i.timestamp,
        });
    }
    grouped
        .into_iter()
        .map(|(user, mut items)| {
            // stable sort
            items.sort_by_key(|e| e.timestamp);
            let mut seen = HashSet::new();
            items.retain(|e| seen.insert(e.item.clone()));
            (user.clone(), BehaviorSequence { user, items })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Validation,
    Test,
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitRole::Validation => "valid",
            SplitRole::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCase {
    pub user: UserId,
    pub train_prefix: BehaviorSequence,
    pub held_out: ItemId,
    pub split_role: SplitRole,
}

impl SplitCase {
    pub fn case_id(&self) -> String {
        format!("{}:{}", self.user, self.split_role)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    /// Validation then test case for every kept user, users in ascending order.
    pub cases: Vec<SplitCase>,
    /// Users with fewer than three positives.
    pub skipped: Vec<UserId>,
}

impl SplitOutcome {
    pub fn test_cases(&self) -> impl Iterator<Item = &SplitCase> + '_ {
        self.cases.iter().filter(|c| c.split_role == SplitRole::Test)
    }

    pub fn validation_cases(&self) -> impl Iterator<Item = &SplitCase> + '_ {
        self.cases.iter().filter(|c| c.split_role == SplitRole::Validation)
    }
}

/// Last positive is the test target, second-to-last the validation target.
pub fn leave_one_out_split(sequences: &BTreeMap<UserId, BehaviorSequence>) -> SplitOutcome {
    let mut out = SplitOutcome::default();
    for (user, seq) in sequences {
        let n = seq.len();
        if n < 3 {
            out.skipped.push(user.clone());
            continue;
        }
        out.cases.push(SplitCase {
            user: user.clone(),
            train_prefix: seq.prefix(n - 2),
            held_out: seq.items[n - 2].item.clone(),
            split_role: SplitRole::Validation,
        });
        out.cases.push(SplitCase {
            user: user.clone(),
            train_prefix: seq.prefix(n - 1),
            held_out: seq.items[n - 1].item.clone(),
            split_role: SplitRole::Test,
        });
    }
    if !out.skipped.is_empty() {
        tracing::info!(skipped = out.skipped.len(), "users with fewer than 3 positives left out of splits");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inter(user: &str, item: &str, rating: f64, ts: i64) -> Interaction {
        Interaction {
            user: user.into(),
            item: item.into(),
            rating,
            timestamp: ts,
        }
    }

    #[test]
    fn strict_threshold_keeps_above_three() {
        let seqs = build_sequences(
            &[inter("u", "a", 5.0, 1), inter("u", "b", 3.0, 2), inter("u", "c", 4.0, 3)],
            3.0,
        );
        let ratings: Vec<f64> = seqs[&UserId::from("u")].items.iter().map(|e| e.rating).collect();
        assert_eq!(ratings, vec![5.0, 4.0]);
    }

    #[test]
    fn user_with_only_threshold_ratings_is_omitted() {
        let seqs = build_sequences(&[inter("u", "a", 3.0, 1), inter("u", "b", 3.0, 2)], 3.0);
        assert!(seqs.is_empty());
    }

    #[test]
    fn sorted_by_time_with_stable_ties() {
        let seqs = build_sequences(
            &[
                inter("u", "late", 5.0, 30),
                inter("u", "tie1", 5.0, 10),
                inter("u", "early", 5.0, 5),
                inter("u", "tie2", 5.0, 10),
            ],
            3.0,
        );
        let order: Vec<&str> = seqs[&UserId::from("u")].item_ids().map(ItemId::as_str).collect();
        assert_eq!(order, vec!["early", "tie1", "tie2", "late"]);
    }

    #[test]
    fn split_definition() {
        let seqs = build_sequences(
            &[inter("u", "a", 5.0, 1), inter("u", "b", 5.0, 2), inter("u", "c", 5.0, 3), inter("u", "d", 5.0, 4)],
            3.0,
        );
        let split = leave_one_out_split(&seqs);
        let test = split.test_cases().next().unwrap();
        assert_eq!(test.held_out.as_str(), "d");
        let p: Vec<&str> = test.train_prefix.item_ids().map(ItemId::as_str).collect();
        assert_eq!(p, vec!["a", "b", "c"]);
        let valid = split.validation_cases().next().unwrap();
        assert_eq!(valid.held_out.as_str(), "c");
        assert_eq!(valid.train_prefix.len(), 2);
        assert_eq!(test.case_id(), "u:test");
    }

    #[test]
    fn short_sequences_are_skipped() {
        let seqs = build_sequences(&[inter("u", "a", 5.0, 1), inter("u", "b", 5.0, 2)], 3.0);
        let split = leave_one_out_split(&seqs);
        assert!(split.cases.is_empty());
        assert_eq!(split.skipped, vec![UserId::from("u")]);
    }

    #[test]
    fn one_test_case_per_eligible_user() {
        let mut all = Vec::new();
        for u in 0..100 {
            for k in 0..(3 + u % 4) {
                all.push(inter(&format!("u{u}"), &format!("i{}", u * 10 + k), 5.0, k as i64));
            }
        }
        let split = leave_one_out_split(&build_sequences(&all, 3.0));
        assert_eq!(split.test_cases().count(), 100);
        assert_eq!(split.validation_cases().count(), 100);
    }
}
