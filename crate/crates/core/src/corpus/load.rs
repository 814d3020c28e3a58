use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Interaction;
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};

const RATING_SCALE: (f64, f64) = (1.0, 5.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// `user::item::rating::timestamp` ratings with `movies.dat`/`users.dat` companions.
    MovieLens,
    /// Line-delimited review records with a line-delimited metadata file.
    Amazon,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "movielens" | "ml" => Ok(DatasetFormat::MovieLens),
            "amazon" => Ok(DatasetFormat::Amazon),
            _ => Err(Error::UnknownFormat(s.to_owned())),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::MovieLens => "movielens",
            DatasetFormat::Amazon => "amazon",
        })
    }
}

/// Parsed records plus the number of lines that could not be parsed.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: T,
    pub malformed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub item: ItemId,
    pub title: String,
    /// Categories that drive `same_category` relations: the leaf category for
    /// Amazon items, every genre for movies.
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brand: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub also_bought: Vec<ItemId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub also_viewed: Vec<ItemId>,
}

impl ItemMeta {
    pub fn primary_category(&self) -> &str {
        self.categories.first().map(String::as_str).unwrap_or("unknown")
    }

    /// Attribute map shown by the item tool, in a fixed key order.
    pub fn attributes(&self) -> Vec<(&'static str, String)> {
        let mut attrs = vec![("title", self.title.clone())];
        if !self.categories.is_empty() {
            let key = if self.year.is_some() { "genre" } else { "category" };
            attrs.push((key, self.categories.join(" | ")));
        }
        if let Some(year) = self.year {
            attrs.push(("year", year.to_string()));
        }
        if let Some(brand) = &self.brand {
            attrs.push(("brand", brand.clone()));
        }
        if let Some(price) = &self.price {
            attrs.push(("price", price.clone()));
        }
        if let Some(desc) = &self.description {
            attrs.push(("description", desc.clone()));
        }
        attrs
    }

    pub fn has_links(&self) -> bool {
        !self.also_bought.is_empty() || !self.also_viewed.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemCatalog {
    pub items: BTreeMap<ItemId, ItemMeta>,
}

impl ItemCatalog {
    pub fn get(&self, item: &ItemId) -> Option<&ItemMeta> {
        self.items.get(item)
    }

    pub fn contains(&self, item: &ItemId) -> bool {
        self.items.contains_key(item)
    }

    pub fn title(&self, item: &ItemId) -> &str {
        self.items.get(item).map(|m| m.title.as_str()).unwrap_or("(untitled)")
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Whether any item carries co-purchase or co-view links.
    pub fn has_link_metadata(&self) -> bool {
        self.items.values().any(ItemMeta::has_links)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: String,
    pub age: u32,
    pub occupation: String,
}

impl Demographics {
    /// Key used for demographic-sharing edges.
    pub fn group_key(&self) -> String {
        format!("{}|{}|{}", self.gender, self.age, self.occupation)
    }
}

impl fmt::Display for Demographics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}, {}", self.gender, self.age, self.occupation)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub interactions: usize,
    pub malformed_interactions: usize,
    pub items: usize,
    pub malformed_items: usize,
    pub users_with_demographics: usize,
    pub malformed_users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub interactions: PathBuf,
    pub items: Option<PathBuf>,
    pub users: Option<PathBuf>,
}

impl DatasetPaths {
    /// Conventional layout of a dataset directory for `format`.
    pub fn in_dir(format: DatasetFormat, dir: &Path) -> Self {
        match format {
            DatasetFormat::MovieLens => DatasetPaths {
                interactions: dir.join("ratings.dat"),
                items: Some(dir.join("movies.dat")),
                users: Some(dir.join("users.dat")).filter(|p| p.exists()),
            },
            DatasetFormat::Amazon => DatasetPaths {
                interactions: dir.join("reviews.jsonl"),
                items: Some(dir.join("meta.jsonl")),
                users: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub format: DatasetFormat,
    pub interactions: Vec<Interaction>,
    pub catalog: ItemCatalog,
    pub demographics: BTreeMap<UserId, Demographics>,
    pub report: IngestReport,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn valid_interaction(i: &Interaction) -> bool {
    i.rating.is_finite() && i.rating >= RATING_SCALE.0 && i.rating <= RATING_SCALE.1 && i.timestamp >= 0
}

/// Parses the interaction file of a dataset. Lines that fail to parse or
/// violate the rating scale are counted, not fatal.
pub fn load_interactions(format: DatasetFormat, path: &Path) -> Result<Loaded<Vec<Interaction>>> {
    let loaded = parse_interactions(format, &read_text(path)?);
    if loaded.records.is_empty() {
        return Err(Error::NoRecords(path.to_owned()));
    }
    if loaded.malformed > 0 {
        tracing::warn!(path = %path.display(), malformed = loaded.malformed, "skipped malformed interaction lines");
    }
    Ok(loaded)
}

pub fn parse_interactions(format: DatasetFormat, text: &str) -> Loaded<Vec<Interaction>> {
    let mut records = Vec::new();
    let mut malformed = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parsed = match format {
            DatasetFormat::MovieLens => parse_ml_rating(line),
            DatasetFormat::Amazon => parse_amazon_review(line),
        };
        match parsed {
            Some(i) if valid_interaction(&i) => records.push(i),
            _ => malformed += 1,
        }
    }
    Loaded { records, malformed }
}

pub fn load_dataset(format: DatasetFormat, paths: &DatasetPaths) -> Result<Dataset> {
    let loaded = load_interactions(format, &paths.interactions)?;
    let items = paths.items.as_deref().map(read_text).transpose()?;
    let users = paths.users.as_deref().map(read_text).transpose()?;
    Ok(assemble(format, loaded, items.as_deref(), users.as_deref()))
}

/// Builds a dataset from file contents already in memory.
pub fn parse_dataset(format: DatasetFormat, interactions: &str, items: Option<&str>, users: Option<&str>) -> Result<Dataset> {
    let loaded = parse_interactions(format, interactions);
    if loaded.records.is_empty() {
        return Err(Error::NoRecords(PathBuf::from("<memory>")));
    }
    Ok(assemble(format, loaded, items, users))
}

fn assemble(format: DatasetFormat, loaded: Loaded<Vec<Interaction>>, items: Option<&str>, users: Option<&str>) -> Dataset {
    let mut report = IngestReport {
        interactions: loaded.records.len(),
        malformed_interactions: loaded.malformed,
        ..IngestReport::default()
    };
    let mut catalog = ItemCatalog::default();
    for line in items.unwrap_or_default().lines().filter(|l| !l.trim().is_empty()) {
        let meta = match format {
            DatasetFormat::MovieLens => parse_ml_movie(line),
            DatasetFormat::Amazon => parse_amazon_meta(line),
        };
        match meta {
            Some(m) => {
                catalog.items.insert(m.item.clone(), m);
            }
            None => report.malformed_items += 1,
        }
    }
    report.items = catalog.len();
    let mut demographics = BTreeMap::new();
    for line in users.unwrap_or_default().lines().filter(|l| !l.trim().is_empty()) {
        match parse_ml_user(line) {
            Some((u, d)) => {
                demographics.insert(u, d);
            }
            None => report.malformed_users += 1,
        }
    }
    report.users_with_demographics = demographics.len();
    Dataset {
        format,
        interactions: loaded.records,
        catalog,
        demographics,
        report,
    }
}

fn parse_ml_rating(line: &str) -> Option<Interaction> {
    let mut parts = line.trim().split("::");
    let user = parts.next()?.trim();
    let item = parts.next()?.trim();
    let rating = parts.next()?.trim().parse().ok()?;
    let timestamp = parts.next()?.trim().parse().ok()?;
    if parts.next().is_some() || user.is_empty() || item.is_empty() {
        return None;
    }
    Some(Interaction {
        user: user.into(),
        item: item.into(),
        rating,
        timestamp,
    })
}

#[derive(Deserialize)]
struct AmazonReview {
    #[serde(alias = "user_id", alias = "user")]
    #[serde(rename = "reviewerID")]
    reviewer: serde_json::Value,
    #[serde(alias = "item_id", alias = "item")]
    asin: serde_json::Value,
    #[serde(alias = "rating")]
    overall: f64,
    #[serde(alias = "timestamp")]
    #[serde(rename = "unixReviewTime")]
    time: i64,
}

fn scalar_id(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_owned()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_amazon_review(line: &str) -> Option<Interaction> {
    let r: AmazonReview = serde_json::from_str(line).ok()?;
    Some(Interaction {
        user: scalar_id(&r.reviewer)?.into(),
        item: scalar_id(&r.asin)?.into(),
        rating: r.overall,
        timestamp: r.time,
    })
}

#[derive(Deserialize)]
struct AmazonMeta {
    asin: serde_json::Value,
    #[serde(default)]
    title: String,
    #[serde(default, alias = "categories")]
    category: CategoryField,
    #[serde(default)]
    brand: Option<String>,
    #[serde(default)]
    price: Option<serde_json::Value>,
    #[serde(default)]
    description: DescriptionField,
    #[serde(default, alias = "also_bought")]
    also_buy: Vec<serde_json::Value>,
    #[serde(default, alias = "also_viewed")]
    also_view: Vec<serde_json::Value>,
}

#[derive(Deserialize, Default)]
#[serde(untagged)]
enum CategoryField {
    #[default]
    None,
    Flat(Vec<String>),
    Nested(Vec<Vec<String>>),
    One(String),
}

#[derive(Deserialize, Default)]
#[serde(untagged)]
enum DescriptionField {
    #[default]
    None,
    One(String),
    Many(Vec<String>),
}

fn parse_amazon_meta(line: &str) -> Option<ItemMeta> {
    let m: AmazonMeta = serde_json::from_str(line).ok()?;
    let path: Vec<String> = match m.category {
        CategoryField::None => Vec::new(),
        CategoryField::Flat(v) => v,
        CategoryField::Nested(v) => v.into_iter().next().unwrap_or_default(),
        CategoryField::One(s) => vec![s],
    };
    let leaf = path.into_iter().rev().find(|c| !c.trim().is_empty());
    let description = match m.description {
        DescriptionField::None => None,
        DescriptionField::One(s) => Some(s),
        DescriptionField::Many(v) => Some(v.join(" ")),
    }
    .filter(|s| !s.trim().is_empty());
    let ids = |v: Vec<serde_json::Value>| v.iter().filter_map(scalar_id).map(ItemId::from).collect();
    Some(ItemMeta {
        item: scalar_id(&m.asin)?.into(),
        title: m.title,
        categories: leaf.into_iter().collect(),
        brand: m.brand.filter(|b| !b.trim().is_empty()),
        price: m.price.and_then(|p| match p {
            serde_json::Value::String(s) if !s.is_empty() => Some(s),
            serde_json::Value::Number(n) => Some(n.to_string()),
            _ => None,
        }),
        description,
        year: None,
        also_bought: ids(m.also_buy),
        also_viewed: ids(m.also_view),
    })
}

/// `1::Toy Story (1995)::Animation|Children's|Comedy`
fn parse_ml_movie(line: &str) -> Option<ItemMeta> {
    let mut parts = line.trim().splitn(3, "::");
    let id = parts.next()?.trim();
    let raw_title = parts.next()?.trim();
    let genres = parts.next()?.trim();
    if id.is_empty() {
        return None;
    }
    let (title, year) = split_year(raw_title);
    Some(ItemMeta {
        item: id.into(),
        title: title.to_owned(),
        categories: genres
            .split('|')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(str::to_owned)
            .collect(),
        year,
        ..ItemMeta::default()
    })
}

fn split_year(title: &str) -> (&str, Option<u32>) {
    if let Some(open) = title.rfind(" (") {
        let tail = &title[open + 2..];
        if let Some(y) = tail.strip_suffix(')').and_then(|y| y.parse().ok()) {
            return (&title[..open], Some(y));
        }
    }
    (title, None)
}

/// `1::F::1::10::48067`
fn parse_ml_user(line: &str) -> Option<(UserId, Demographics)> {
    let parts: Vec<&str> = line.trim().split("::").collect();
    if parts.len() < 4 {
        return None;
    }
    let occupation_code: usize = parts[3].trim().parse().ok()?;
    Some((
        parts[0].trim().into(),
        Demographics {
            gender: parts[1].trim().to_owned(),
            age: parts[2].trim().parse().ok()?,
            occupation: ML_OCCUPATIONS.get(occupation_code)?.to_string(),
        },
    ))
}

const ML_OCCUPATIONS: [&str; 21] = [
    "other",
    "academic/educator",
    "artist",
    "clerical/admin",
    "college/grad student",
    "customer service",
    "doctor/health care",
    "executive/managerial",
    "farmer",
    "homemaker",
    "K-12 student",
    "lawyer",
    "programmer",
    "retired",
    "sales/marketing",
    "scientist",
    "self-employed",
    "technician/engineer",
    "tradesman/craftsman",
    "unemployed",
    "writer",
];
