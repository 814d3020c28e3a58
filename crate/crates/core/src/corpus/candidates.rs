use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::SplitCase;
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};
use crate::seed;

pub const CANDIDATE_COUNT: usize = 10;

/// One held-out positive plus sampled negatives, in a seeded shuffled order.
///
/// This is also the persisted record layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub case_id: String,
    pub user: UserId,
    pub candidates: Vec<ItemId>,
    pub positive_index: usize,
    pub seed: u64,
}

impl CandidateSet {
    pub fn gold(&self) -> &ItemId {
        &self.candidates[self.positive_index]
    }

    pub fn contains(&self, item: &ItemId) -> bool {
        self.candidates.contains(item)
    }
}

/// Samples `n_neg` negatives uniformly from `item_universe` minus the user's
/// positives and shuffles them together with the held-out item.
///
/// `positives` must be the user's full positive history, not the prefix.
pub fn sample_candidates(
    case: &SplitCase,
    item_universe: &[ItemId],
    positives: &HashSet<ItemId>,
    n_neg: usize,
    seed: u64,
) -> Result<CandidateSet> {
    let pool: Vec<&ItemId> = item_universe
        .iter()
        .filter(|i| !positives.contains(*i) && **i != case.held_out)
        .collect();
    if pool.len() < n_neg {
        return Err(Error::InsufficientNegatives {
            user: case.user.to_string(),
            needed: n_neg,
            available: pool.len(),
        });
    }
    let mut rng = seed::rng(seed);
    let mut candidates: Vec<ItemId> = pool
        .choose_multiple(&mut rng, n_neg)
        .map(|i| (*i).clone())
        .collect();
    candidates.push(case.held_out.clone());
    candidates.shuffle(&mut rng);
    let positive_index = candidates
        .iter()
        .position(|i| *i == case.held_out)
        .expect("held-out item was just inserted");
    Ok(CandidateSet {
        case_id: case.case_id(),
        user: case.user.clone(),
        candidates,
        positive_index,
        seed,
    })
}
