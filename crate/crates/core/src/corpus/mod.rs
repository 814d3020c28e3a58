//! Raw interaction data: ingestion, chronological sequences, leave-one-out
//! splits, candidate sampling and dataset statistics.

mod candidates;
mod load;
mod sequence;
mod stats;

pub use candidates::{sample_candidates, CandidateSet, CANDIDATE_COUNT};
pub use load::{
    load_dataset, load_interactions, parse_dataset, parse_interactions, Dataset, DatasetFormat, DatasetPaths, Demographics,
    IngestReport, ItemCatalog, ItemMeta, Loaded,
};
pub use sequence::{
    build_sequences, leave_one_out_split, BehaviorSequence, SeqEntry, SplitCase, SplitOutcome,
    SplitRole,
};
pub use stats::{dataset_stats, DatasetStats};

use serde::{Deserialize, Serialize};

use crate::ids::{ItemId, UserId};

/// Interactions rated strictly above this value count as positive feedback.
pub const DEFAULT_POSITIVE_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub rating: f64,
    pub timestamp: i64,
}
