//! Glue from a loaded dataset to runnable episodes, and the command
//! implementations behind the `toolrec` binary.

pub mod commands;
pub mod config;
pub mod manifest;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::agent::EpisodeCase;
use crate::corpus::{
    build_sequences, leave_one_out_split, sample_candidates, BehaviorSequence, CandidateSet, Dataset, SplitOutcome,
    SplitRole, CANDIDATE_COUNT,
};
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};
use crate::corpus::DEFAULT_POSITIVE_THRESHOLD;
use crate::retrieval::{EmbeddingProvider, HashingEmbedder};
use crate::synthetic::SyntheticConfig;
use crate::seed;
use crate::toolbox::{build_indexes, generate_profile, training_histories, ProfileBackend, ProfileStore, ToolConfig, Toolbox};

/// Sequences, leave-one-out cases and their candidate sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedCorpus {
    pub sequences: BTreeMap<UserId, BehaviorSequence>,
    pub split: SplitOutcome,
    /// One per split case, in split order.
    pub candidates: Vec<CandidateSet>,
}

impl PreparedCorpus {
    /// What the tools may show: validation prefixes of every user.
    pub fn training_histories(&self) -> BTreeMap<UserId, BehaviorSequence> {
        training_histories(&self.sequences, &self.split)
    }

    pub fn episode_cases(&self, role: SplitRole) -> Vec<EpisodeCase> {
        pair_cases(&self.split, &self.candidates, role).expect("candidates were sampled from this split")
    }
}

/// Matches candidate sets to split cases by case id.
pub fn pair_cases(split: &SplitOutcome, candidates: &[CandidateSet], role: SplitRole) -> Result<Vec<EpisodeCase>> {
    let by_id: BTreeMap<&str, &CandidateSet> = candidates.iter().map(|c| (c.case_id.as_str(), c)).collect();
    split
        .cases
        .iter()
        .filter(|c| c.split_role == role)
        .map(|c| {
            let id = c.case_id();
            let cs = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::InvalidArgument(format!("no candidate set for case {id}")))?;
            EpisodeCase::new(c.clone(), (*cs).clone())
        })
        .collect()
}

/// Builds sequences, splits them and samples a candidate set per case.
/// Negatives avoid every item the user interacted with, at any rating.
pub fn prepare(dataset: &Dataset, threshold: f64, seed: u64) -> Result<PreparedCorpus> {
    let sequences = build_sequences(&dataset.interactions, threshold);
    let split = leave_one_out_split(&sequences);
    if split.cases.is_empty() {
        return Err(Error::Empty("leave-one-out cases (no user has three positives)"));
    }
    let universe: Vec<ItemId> = dataset
        .interactions
        .iter()
        .map(|i| i.item.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut seen: BTreeMap<&UserId, HashSet<ItemId>> = BTreeMap::new();
    for i in &dataset.interactions {
        seen.entry(&i.user).or_default().insert(i.item.clone());
    }
    let candidates = split
        .cases
        .iter()
        .map(|case| {
            let s = seed::derive(seed, &format!("candidates:{}", case.case_id()), 0);
            sample_candidates(case, &universe, &seen[&case.user], CANDIDATE_COUNT - 1, s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedCorpus {
        sequences,
        split,
        candidates,
    })
}

/// One profile per user with a non-empty training history.
pub fn build_profiles(
    backend: &ProfileBackend<'_>,
    dataset: &Dataset,
    histories: &BTreeMap<UserId, BehaviorSequence>,
) -> Result<ProfileStore> {
    let mut store = ProfileStore::default();
    for (user, hist) in histories {
        store.insert(generate_profile(
            backend,
            user,
            hist,
            dataset.demographics.get(user),
            &dataset.catalog,
        )?);
    }
    Ok(store)
}

/// Everything needed to run episodes in memory, from a dataset.
pub fn build_toolbox(
    dataset: &Dataset,
    prepared: &PreparedCorpus,
    profiles: ProfileStore,
    embedder: &dyn EmbeddingProvider,
    config: ToolConfig,
) -> Result<Toolbox> {
    let indexes = build_indexes(
        dataset.catalog.clone(),
        &dataset.demographics,
        prepared.training_histories(),
        profiles,
        embedder,
    )?;
    Toolbox::new(indexes, config)
}

/// A dataset prepared end to end in memory, ready for episodes.
pub struct World {
    pub dataset: Dataset,
    pub prepared: PreparedCorpus,
    pub toolbox: Toolbox,
}

impl World {
    /// Template profiles and hashing embeddings: no network, deterministic.
    pub fn offline(dataset: Dataset, seed: u64) -> Result<World> {
        let prepared = prepare(&dataset, DEFAULT_POSITIVE_THRESHOLD, seed)?;
        let profiles = build_profiles(&ProfileBackend::Template, &dataset, &prepared.training_histories())?;
        let toolbox = build_toolbox(&dataset, &prepared, profiles, &HashingEmbedder::default(), ToolConfig::default())?;
        Ok(World {
            dataset,
            prepared,
            toolbox,
        })
    }

    pub fn synthetic(config: &SyntheticConfig) -> Result<World> {
        World::offline(crate::synthetic::generate(config)?.to_dataset()?, config.seed)
    }

    pub fn cases(&self, role: SplitRole) -> Vec<EpisodeCase> {
        self.prepared.episode_cases(role)
    }
}

/// Gold items of the given cases, keyed by case id.
pub fn gold_map(cases: &[EpisodeCase]) -> Vec<(String, ItemId)> {
    cases.iter().map(|c| (c.case_id(), c.split.held_out.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_dataset, DatasetFormat, DatasetPaths};
    use crate::synthetic::{generate, SyntheticConfig};

    #[test]
    fn prepared_cases_pair_up_and_exclude_history() {
        let dir = tempfile::tempdir().unwrap();
        generate(&SyntheticConfig::new(DatasetFormat::Amazon, 20, 60, 200, 3))
            .unwrap()
            .write(dir.path())
            .unwrap();
        let ds = load_dataset(DatasetFormat::Amazon, &DatasetPaths::in_dir(DatasetFormat::Amazon, dir.path())).unwrap();
        let p = prepare(&ds, DEFAULT_POSITIVE_THRESHOLD, 1).unwrap();
        assert_eq!(p.candidates.len(), p.split.cases.len());
        let test = p.episode_cases(SplitRole::Test);
        assert_eq!(test.len(), p.split.test_cases().count());
        for c in &test {
            assert_eq!(c.candidates.candidates.len(), CANDIDATE_COUNT);
            let hist: HashSet<&ItemId> = p.sequences[&c.split.user].item_ids().collect();
            for neg in c.candidates.candidates.iter().filter(|i| *i != c.candidates.gold()) {
                assert!(!hist.contains(neg));
            }
        }
        assert_eq!(p, prepare(&ds, DEFAULT_POSITIVE_THRESHOLD, 1).unwrap());
    }
}
