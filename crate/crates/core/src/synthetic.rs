//! Seeded synthetic corpora in the on-disk formats the loader reads.
//!
//! Users favor one genre, so the tools have signal to find; counts of users,
//! distinct items and interactions are exact, which lets fixtures match a
//! declared statistics table.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{parse_dataset, Dataset, DatasetFormat};
use crate::error::{Error, Result};
use crate::seed;

const GENRES: [&str; 8] = ["Jazz", "Rock", "Classical", "Pop", "Blues", "Folk", "Electronic", "Country"];
const MOVIE_GENRES: [&str; 8] = ["Drama", "Comedy", "Action", "Thriller", "Romance", "Horror", "Sci-Fi", "Animation"];
const AGES: [u32; 7] = [1, 18, 25, 35, 45, 50, 56];

/// A bundled fixture: directory name and generator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureShape {
    pub name: &'static str,
    pub format: DatasetFormat,
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub seed: u64,
    /// Table-shaped subsets hold positives only, so their statistics are the
    /// same before and after the rating threshold.
    pub positives_only: bool,
}

impl FixtureShape {
    pub fn config(&self) -> SyntheticConfig {
        let mut c = SyntheticConfig::new(self.format, self.users, self.items, self.interactions, self.seed);
        if self.positives_only {
            c.low_rating_fraction = 0.0;
        }
        c
    }
}

pub const FIXTURES: [FixtureShape; 5] = [
    FixtureShape { name: "cds_sparse", format: DatasetFormat::Amazon, users: 100, items: 704, interactions: 800, seed: 101, positives_only: true },
    FixtureShape { name: "cds_dense", format: DatasetFormat::Amazon, users: 100, items: 453, interactions: 800, seed: 102, positives_only: true },
    FixtureShape { name: "ml_sparse", format: DatasetFormat::MovieLens, users: 100, items: 1880, interactions: 5000, seed: 103, positives_only: true },
    FixtureShape { name: "ml_dense", format: DatasetFormat::MovieLens, users: 100, items: 1330, interactions: 5000, seed: 104, positives_only: true },
    FixtureShape { name: "mini", format: DatasetFormat::Amazon, users: 20, items: 60, interactions: 240, seed: 11, positives_only: false },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub format: DatasetFormat,
    pub users: usize,
    /// Exact number of distinct items interacted with.
    pub items: usize,
    pub interactions: usize,
    pub seed: u64,
    /// Share of interactions rated 1 to 3.
    pub low_rating_fraction: f64,
    /// Probability that an interaction stays in the user's favorite genre.
    pub genre_loyalty: f64,
}

impl SyntheticConfig {
    pub fn new(format: DatasetFormat, users: usize, items: usize, interactions: usize, seed: u64) -> Self {
        SyntheticConfig {
            format,
            users,
            items,
            interactions,
            seed,
            low_rating_fraction: 0.1,
            genre_loyalty: 0.8,
        }
    }

    fn validate(&self) -> Result<()> {
        let per_user_max = self.interactions.div_ceil(self.users.max(1));
        if self.users == 0 || self.items == 0 {
            return Err(Error::Config("synthetic corpus needs users and items".into()));
        }
        if self.interactions < self.items || self.interactions < self.users || per_user_max > self.items {
            return Err(Error::Config(format!(
                "cannot place {} interactions over {} users covering exactly {} items",
                self.interactions, self.users, self.items
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRow {
    pub user: usize,
    pub item: usize,
    pub rating: u8,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub rows: Vec<SyntheticRow>,
    pub item_genre: Vec<usize>,
    pub user_genre: Vec<usize>,
}

fn genre_of(item: usize, n_items: usize) -> usize {
    item * GENRES.len() / n_items
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = seed::rng(seed::derive(config.seed, "synthetic", 0));
    let n = config.items;
    let item_genre: Vec<usize> = (0..n).map(|i| genre_of(i, n)).collect();
    let user_genre: Vec<usize> = (0..config.users).map(|u| u % GENRES.len()).collect();
    let counts: Vec<usize> = (0..config.users)
        .map(|u| config.interactions / config.users + usize::from(u < config.interactions % config.users))
        .collect();

    // Every item must appear once: deal them to users of the matching genre
    // first, then top users up with genre-biased picks.
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); config.users];
    let mut by_genre: Vec<Vec<usize>> = vec![Vec::new(); GENRES.len()];
    for u in 0..config.users {
        by_genre[user_genre[u]].push(u);
    }
    let mut leftovers = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &i in &order {
        let fans = &by_genre[item_genre[i]];
        match fans.iter().copied().filter(|&u| owned[u].len() < counts[u]).min_by_key(|&u| owned[u].len()) {
            Some(u) => owned[u].push(i),
            None => leftovers.push(i),
        }
    }
    for i in leftovers {
        let u = (0..config.users)
            .filter(|&u| owned[u].len() < counts[u])
            .min_by_key(|&u| owned[u].len())
            .expect("validated: enough slots for every item");
        owned[u].push(i);
    }
    for u in 0..config.users {
        let mut have: HashSet<usize> = owned[u].iter().copied().collect();
        while owned[u].len() < counts[u] {
            let i = if rng.gen_bool(config.genre_loyalty) {
                let g = user_genre[u];
                let lo = (0..n).find(|&i| item_genre[i] == g).unwrap_or(0);
                let hi = (0..n).rfind(|&i| item_genre[i] == g).unwrap_or(n - 1);
                rng.gen_range(lo..=hi)
            } else {
                rng.gen_range(0..n)
            };
            if have.insert(i) {
                owned[u].push(i);
            }
        }
        owned[u].shuffle(&mut rng);
    }

    let mut rows = Vec::with_capacity(config.interactions);
    for (u, items) in owned.iter().enumerate() {
        let start = 946_684_800 + rng.gen_range(0..86_400 * 365) as i64;
        for (t, &i) in items.iter().enumerate() {
            let rating = if rng.gen_bool(config.low_rating_fraction) {
                rng.gen_range(1..=3)
            } else {
                rng.gen_range(4..=5)
            };
            rows.push(SyntheticRow {
                user: u,
                item: i,
                rating,
                timestamp: start + 86_400 * t as i64 + rng.gen_range(0..3600),
            });
        }
    }
    Ok(SyntheticCorpus {
        config: config.clone(),
        rows,
        item_genre,
        user_genre,
    })
}

impl SyntheticCorpus {
    pub fn user_id(&self, u: usize) -> String {
        match self.config.format {
            DatasetFormat::MovieLens => (u + 1).to_string(),
            DatasetFormat::Amazon => format!("A{:05}", u + 1),
        }
    }

    pub fn item_id(&self, i: usize) -> String {
        match self.config.format {
            DatasetFormat::MovieLens => (i + 1).to_string(),
            DatasetFormat::Amazon => format!("B{:07}", i + 1),
        }
    }

    pub fn distinct_items(&self) -> usize {
        self.rows.iter().map(|r| r.item).collect::<BTreeSet<_>>().len()
    }

    /// Writes the dataset files into `dir` in the conventional layout.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        match self.config.format {
            DatasetFormat::MovieLens => {
                put("ratings.dat", self.ml_ratings())?;
                put("movies.dat", self.ml_movies())?;
                put("users.dat", self.ml_users())?;
            }
            DatasetFormat::Amazon => {
                put("reviews.jsonl", self.amazon_reviews())?;
                put("meta.jsonl", self.amazon_meta())?;
            }
        }
        Ok(())
    }

    /// The same dataset the loader would read back from [`Self::write`].
    pub fn to_dataset(&self) -> Result<Dataset> {
        match self.config.format {
            DatasetFormat::MovieLens => parse_dataset(
                DatasetFormat::MovieLens,
                &self.ml_ratings(),
                Some(&self.ml_movies()),
                Some(&self.ml_users()),
            ),
            DatasetFormat::Amazon => parse_dataset(DatasetFormat::Amazon, &self.amazon_reviews(), Some(&self.amazon_meta()), None),
        }
    }

    fn ml_ratings(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(out, "{}::{}::{}::{}", self.user_id(r.user), self.item_id(r.item), r.rating, r.timestamp);
        }
        out
    }

    fn ml_movies(&self) -> String {
        let mut out = String::new();
        for i in 0..self.config.items {
            let g = self.item_genre[i];
            let second = MOVIE_GENRES[(g + 1 + i % 3) % MOVIE_GENRES.len()];
            let _ = writeln!(
                out,
                "{}::{} Story {} ({})::{}|{}",
                self.item_id(i),
                MOVIE_GENRES[g],
                i + 1,
                1970 + i % 31,
                MOVIE_GENRES[g],
                second
            );
        }
        out
    }

    fn ml_users(&self) -> String {
        let mut out = String::new();
        for u in 0..self.config.users {
            let gender = if u % 2 == 0 { "F" } else { "M" };
            let _ = writeln!(
                out,
                "{}::{gender}::{}::{}::{:05}",
                self.user_id(u),
                AGES[u % AGES.len()],
                (u * 7) % 21,
                10_000 + u
            );
        }
        out
    }

    fn amazon_reviews(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let rec = json!({
                "reviewerID": self.user_id(r.user),
                "asin": self.item_id(r.item),
                "overall": r.rating as f64,
                "unixReviewTime": r.timestamp,
            });
            let _ = writeln!(out, "{rec}");
        }
        out
    }

    fn amazon_meta(&self) -> String {
        let n = self.config.items;
        let mut out = String::new();
        for i in 0..n {
            let g = self.item_genre[i];
            let same: Vec<usize> = (0..n).filter(|&j| j != i && self.item_genre[j] == g).collect();
            let pick = |offset: usize, k: usize| -> Vec<String> {
                if same.is_empty() {
                    return Vec::new();
                }
                (0..k.min(same.len()))
                    .map(|s| self.item_id(same[(i * 7 + offset + s * 5) % same.len()]))
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect()
            };
            let rec = json!({
                "asin": self.item_id(i),
                "title": format!("{} Sessions Vol. {}", GENRES[g], i + 1),
                "category": ["CDs & Vinyl", GENRES[g]],
                "brand": format!("{} Records {}", GENRES[g], i % 4 + 1),
                "price": format!("${}.{:02}", 5 + i % 20, (i * 37) % 100),
                "description": format!("A {} album, release {}.", GENRES[g].to_lowercase(), i + 1),
                "also_buy": pick(1, 3),
                "also_view": pick(3, 2),
            });
            let _ = writeln!(out, "{rec}");
        }
        out
    }
}
