use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::Interaction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub inters_per_user: f64,
    pub inters_per_item: f64,
    /// Fraction in [0, 1].
    pub sparsity: f64,
}

impl DatasetStats {
    pub fn from_counts(n_users: usize, n_items: usize, n_interactions: usize) -> Self {
        DatasetStats {
            n_users,
            n_items,
            n_interactions,
            inters_per_user: n_interactions as f64 / n_users as f64,
            inters_per_item: n_interactions as f64 / n_items as f64,
            sparsity: 1.0 - n_interactions as f64 / (n_users as f64 * n_items as f64),
        }
    }

    /// Compares against declared statistics at printed precision: exact
    /// counts, ratios to two decimals, sparsity to two decimals of a percent.
    pub fn matches_printed(&self, declared: &DatasetStats) -> bool {
        let r2 = |x: f64| (x * 100.0).round() as i64;
        self.n_users == declared.n_users
            && self.n_items == declared.n_items
            && self.n_interactions == declared.n_interactions
            && r2(self.inters_per_user) == r2(declared.inters_per_user)
            && r2(self.inters_per_item) == r2(declared.inters_per_item)
            && r2(self.sparsity * 100.0) == r2(declared.sparsity * 100.0)
    }

    /// One row in the style of a dataset-statistics table.
    pub fn table_row(&self, name: &str) -> String {
        format!(
            "{name:<18} {:>7} {:>7} {:>9} {:>8.2} {:>8.2} {:>8.2}%",
            self.n_users,
            self.n_items,
            self.n_interactions,
            self.inters_per_user,
            self.inters_per_item,
            self.sparsity * 100.0
        )
    }
}

/// Statistics over already-filtered interactions.
pub fn dataset_stats(interactions: &[Interaction]) -> Result<DatasetStats> {
    if interactions.is_empty() {
        return Err(Error::Empty("interactions"));
    }
    let users: HashSet<_> = interactions.iter().map(|i| &i.user).collect();
    let items: HashSet<_> = interactions.iter().map(|i| &i.item).collect();
    Ok(DatasetStats::from_counts(users.len(), items.len(), interactions.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_subset_counts() {
        let s = DatasetStats::from_counts(100, 704, 800);
        assert_eq!(format!("{:.2}", s.inters_per_user), "8.00");
        assert_eq!(format!("{:.2}", s.inters_per_item), "1.14");
        assert_eq!(format!("{:.2}", s.sparsity * 100.0), "98.86");
    }

    #[test]
    fn dense_subset_ratio() {
        let s = DatasetStats::from_counts(100, 1330, 5000);
        assert_eq!(format!("{:.2}", s.inters_per_item), "3.76");
        assert_eq!(format!("{:.2}", s.sparsity * 100.0), "96.24");
    }

    #[test]
    fn single_cell_is_dense() {
        let s = dataset_stats(&[Interaction {
            user: "u".into(),
            item: "i".into(),
            rating: 5.0,
            timestamp: 0,
        }])
        .unwrap();
        assert_eq!(s.sparsity, 0.0);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(dataset_stats(&[]).is_err());
    }
}
