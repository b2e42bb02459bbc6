//! Metadata-partitioned labeled datasets.
//!
//! A [`MetadataDataset`] is an immutable collection of labeled points, each
//! tagged with one of two metadata categories. Points carry stable integer
//! identities assigned at construction so that train/test/holdout subsets can
//! be checked for disjointness after arbitrary resampling.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column {column} ({name}): cannot parse {value:?} as {expected}")]
    Parse {
        row: u64,
        column: usize,
        name: String,
        value: String,
        expected: &'static str,
    },
    #[error("row {row}: expected {expected} columns, found {found}")]
    RowLength { row: u64, expected: usize, found: usize },
    #[error("schema: {0}")]
    Schema(String),
    #[error("category {category} holds {available} points, cannot take {requested}")]
    Insufficient {
        category: Category,
        requested: usize,
        available: usize,
    },
    #[error("point {id} has {found} features, expected {expected}")]
    FeatureLength { id: u64, expected: usize, found: usize },
    #[error("invalid population proportion ({a}, {b})")]
    Proportion { a: f64, b: f64 },
    #[error("no char_freq_* columns found")]
    NoCharFrequencyColumns,
    #[error("invalid synthetic spec: {0}")]
    Synthetic(&'static str),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Metadata tag. Exactly two categories are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    A,
    B,
}

impl Category {
    pub fn other(self) -> Category {
        match self {
            Category::A => Category::B,
            Category::B => Category::A,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::A => "A",
            Category::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: u32,
    pub category: Category,
}

/// Population proportion pair `(p_A, p_B)`, summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub a: f64,
    pub b: f64,
}

impl Proportion {
    pub fn from_a(a: f64) -> Result<Self> {
        Self::new(a, 1.0 - a)
    }

    pub fn new(a: f64, b: f64) -> Result<Self> {
        let ok = (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && (a + b - 1.0).abs() < 1e-9;
        if ok {
            Ok(Proportion { a, b })
        } else {
            Err(DatasetError::Proportion { a, b })
        }
    }

    pub fn get(&self, category: Category) -> f64 {
        match category {
            Category::A => self.a,
            Category::B => self.b,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetadataDataset {
    points: Vec<LabeledPoint>,
    feature_names: Vec<String>,
    n_a: usize,
    n_b: usize,
    p0: Proportion,
}

impl MetadataDataset {
    /// Builds a dataset; `p0` defaults to the empirical category proportions.
    pub fn new(points: Vec<LabeledPoint>, feature_names: Vec<String>) -> Result<Self> {
        let width = points
            .first()
            .map(|p| p.features.len())
            .unwrap_or(feature_names.len());
        if !feature_names.is_empty() && feature_names.len() != width {
            return Err(DatasetError::Schema(format!(
                "{} feature names for {} features",
                feature_names.len(),
                width
            )));
        }
        for p in &points {
            if p.features.len() != width {
                return Err(DatasetError::FeatureLength {
                    id: p.id,
                    expected: width,
                    found: p.features.len(),
                });
            }
        }
        let n_a = points.iter().filter(|p| p.category == Category::A).count();
        let n_b = points.len() - n_a;
        let p0 = if points.is_empty() {
            Proportion { a: 0.5, b: 0.5 }
        } else {
            let a = n_a as f64 / points.len() as f64;
            Proportion { a, b: 1.0 - a }
        };
        Ok(MetadataDataset {
            points,
            feature_names,
            n_a,
            n_b,
            p0,
        })
    }

    /// Featureless points with only category tags. Enough for the synthetic
    /// accuracy oracle, which depends on counts alone.
    pub fn placeholder(n_a: usize, n_b: usize) -> Self {
        let points = (0..n_a + n_b)
            .map(|i| LabeledPoint {
                id: i as u64,
                features: Vec::new(),
                label: 0,
                category: if i < n_a { Category::A } else { Category::B },
            })
            .collect();
        Self::new(points, Vec::new()).expect("placeholder points are uniform")
    }

    pub fn with_p0(mut self, p0: Proportion) -> Self {
        self.p0 = p0;
        self
    }

    /// A dataset over `points` that inherits names and `p0` from `self`.
    pub fn subset(&self, points: Vec<LabeledPoint>) -> Self {
        let n_a = points.iter().filter(|p| p.category == Category::A).count();
        let n_b = points.len() - n_a;
        MetadataDataset {
            points,
            feature_names: self.feature_names.clone(),
            n_a,
            n_b,
            p0: self.p0,
        }
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn count(&self, category: Category) -> usize {
        match category {
            Category::A => self.n_a,
            Category::B => self.n_b,
        }
    }

    pub fn p0(&self) -> Proportion {
        self.p0
    }

    pub fn n_features(&self) -> usize {
        self.points
            .first()
            .map(|p| p.features.len())
            .unwrap_or(self.feature_names.len())
    }

    pub fn ids(&self) -> HashSet<u64> {
        self.points.iter().map(|p| p.id).collect()
    }

    pub fn category_points(&self, category: Category) -> impl Iterator<Item = &LabeledPoint> {
        self.points.iter().filter(move |p| p.category == category)
    }

    /// Points of one category, as a dataset.
    pub fn partition(&self, category: Category) -> Self {
        self.subset(self.category_points(category).cloned().collect())
    }

    /// Everything except the given identities.
    pub fn without(&self, ids: &HashSet<u64>) -> Self {
        self.subset(
            self.points
                .iter()
                .filter(|p| !ids.contains(&p.id))
                .cloned()
                .collect(),
        )
    }

    /// Concatenation; identities must already be distinct.
    pub fn union(&self, other: &MetadataDataset) -> Self {
        let mut points = self.points.clone();
        points.extend(other.points.iter().cloned());
        self.subset(points)
    }

    /// Uniform sample without replacement of `count` points from `category`.
    pub fn samp<R: Rng + ?Sized>(&self, category: Category, count: usize, rng: &mut R) -> Result<Self> {
        let pool: Vec<&LabeledPoint> = self.category_points(category).collect();
        if count > pool.len() {
            return Err(DatasetError::Insufficient {
                category,
                requested: count,
                available: pool.len(),
            });
        }
        let chosen = index::sample(rng, pool.len(), count);
        Ok(self.subset(chosen.iter().map(|i| pool[i].clone()).collect()))
    }

    /// Writes the dataset as CSV with a header: features, `label`, `category`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = if self.feature_names.is_empty() {
            (0..self.n_features()).map(|i| format!("x{i}")).collect()
        } else {
            self.feature_names.clone()
        };
        header.push("label".into());
        header.push("category".into());
        w.write_record(&header)?;
        for p in &self.points {
            let mut row: Vec<String> = p.features.iter().map(|v| v.to_string()).collect();
            row.push(p.label.to_string());
            row.push(p.category.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }
}

/// Column reference by header name or zero-based index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl ColumnRef {
    fn resolve(&self, names: &[String]) -> Result<usize> {
        match self {
            ColumnRef::Index(i) if *i < names.len() => Ok(*i),
            ColumnRef::Index(i) => Err(DatasetError::Schema(format!(
                "column index {i} out of range ({} columns)",
                names.len()
            ))),
            ColumnRef::Name(n) => names
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| DatasetError::Schema(format!("no column named {n:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CategoryRule {
    /// Explicit tag column holding `a_value` or `b_value`.
    Column {
        column: ColumnRef,
        #[serde(default = "default_a")]
        a_value: String,
        #[serde(default = "default_b")]
        b_value: String,
    },
    /// Category B iff any matching column is strictly positive.
    AnyPositive { columns: Vec<String> },
}

fn default_a() -> String {
    "A".into()
}

fn default_b() -> String {
    "B".into()
}

/// Maps CSV columns to roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label_column: ColumnRef,
    pub category_rule: CategoryRule,
    /// Name patterns removed from the features; a trailing `*` matches a prefix.
    #[serde(default)]
    pub drop_columns: Vec<String>,
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Explicit column names, for headerless files.
    #[serde(default)]
    pub column_names: Option<Vec<String>>,
}

fn default_true() -> bool {
    true
}

fn matches_pattern(pattern: &str, name: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(prefix) => name.starts_with(prefix),
        None => pattern == name,
    }
}

/// Canonical column layout of the UCI Spambase file (no header row).
pub const SPAMBASE_COLUMNS: [&str; 58] = [
    "word_freq_make",
    "word_freq_address",
    "word_freq_all",
    "word_freq_3d",
    "word_freq_our",
    "word_freq_over",
    "word_freq_remove",
    "word_freq_internet",
    "word_freq_order",
    "word_freq_mail",
    "word_freq_receive",
    "word_freq_will",
    "word_freq_people",
    "word_freq_report",
    "word_freq_addresses",
    "word_freq_free",
    "word_freq_business",
    "word_freq_email",
    "word_freq_you",
    "word_freq_credit",
    "word_freq_your",
    "word_freq_font",
    "word_freq_000",
    "word_freq_money",
    "word_freq_hp",
    "word_freq_hpl",
    "word_freq_george",
    "word_freq_650",
    "word_freq_lab",
    "word_freq_labs",
    "word_freq_telnet",
    "word_freq_857",
    "word_freq_data",
    "word_freq_415",
    "word_freq_85",
    "word_freq_technology",
    "word_freq_1999",
    "word_freq_parts",
    "word_freq_pm",
    "word_freq_direct",
    "word_freq_cs",
    "word_freq_meeting",
    "word_freq_original",
    "word_freq_project",
    "word_freq_re",
    "word_freq_edu",
    "word_freq_table",
    "word_freq_conference",
    "char_freq_;",
    "char_freq_(",
    "char_freq_[",
    "char_freq_!",
    "char_freq_$",
    "char_freq_#",
    "capital_run_length_average",
    "capital_run_length_longest",
    "capital_run_length_total",
    "spam",
];

const CHAR_FREQ_PREFIX: &str = "char_freq_";

impl CsvSchema {
    /// Spambase with engineered metadata: B = any special character present.
    pub fn spambase() -> Self {
        CsvSchema {
            label_column: ColumnRef::Name("spam".into()),
            category_rule: CategoryRule::AnyPositive {
                columns: vec![format!("{CHAR_FREQ_PREFIX}*")],
            },
            drop_columns: vec![format!("{CHAR_FREQ_PREFIX}*")],
            has_header: false,
            column_names: Some(SPAMBASE_COLUMNS.iter().map(|s| s.to_string()).collect()),
        }
    }

    /// The layout written by [`MetadataDataset::save_csv`].
    pub fn roundtrip() -> Self {
        CsvSchema {
            label_column: ColumnRef::Name("label".into()),
            category_rule: CategoryRule::Column {
                column: ColumnRef::Name("category".into()),
                a_value: default_a(),
                b_value: default_b(),
            },
            drop_columns: Vec::new(),
            has_header: true,
            column_names: None,
        }
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| DatasetError::Schema(e.to_string()))
    }
}

enum ResolvedRule {
    Column { index: usize, a: String, b: String },
    AnyPositive(Vec<usize>),
}

struct Resolved {
    label: usize,
    rule: ResolvedRule,
    features: Vec<usize>,
}

fn resolve(schema: &CsvSchema, names: &[String]) -> Result<Resolved> {
    let label = schema.label_column.resolve(names)?;
    if schema
        .drop_columns
        .iter()
        .any(|p| matches_pattern(p, &names[label]))
    {
        return Err(DatasetError::Schema(format!(
            "label column {:?} is listed in drop_columns",
            names[label]
        )));
    }
    let (rule, category_col) = match &schema.category_rule {
        CategoryRule::Column {
            column,
            a_value,
            b_value,
        } => {
            let index = column.resolve(names)?;
            (
                ResolvedRule::Column {
                    index,
                    a: a_value.clone(),
                    b: b_value.clone(),
                },
                Some(index),
            )
        }
        CategoryRule::AnyPositive { columns } => {
            let mut idx = Vec::new();
            for pattern in columns {
                let hits: Vec<usize> = names
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| matches_pattern(pattern, n))
                    .map(|(i, _)| i)
                    .collect();
                if hits.is_empty() {
                    return Err(DatasetError::Schema(format!(
                        "category rule column {pattern:?} matches nothing"
                    )));
                }
                idx.extend(hits);
            }
            (ResolvedRule::AnyPositive(idx), None)
        }
    };
    let features = (0..names.len())
        .filter(|&i| i != label && Some(i) != category_col)
        .filter(|&i| !schema.drop_columns.iter().any(|p| matches_pattern(p, &names[i])))
        .collect();
    Ok(Resolved {
        label,
        rule,
        features,
    })
}

fn parse_f64(raw: &str, row: u64, column: usize, name: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DatasetError::Parse {
            row,
            column,
            name: name.to_string(),
            value: raw.to_string(),
            expected: "a finite number",
        })
}

fn parse_label(raw: &str, row: u64, column: usize, name: &str) -> Result<u32> {
    let v = raw.trim();
    if let Ok(l) = v.parse::<u32>() {
        return Ok(l);
    }
    match v.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 => Ok(x as u32),
        _ => Err(DatasetError::Parse {
            row,
            column,
            name: name.to_string(),
            value: raw.to_string(),
            expected: "a nonnegative integer label",
        }),
    }
}

/// Loads a CSV file under `schema`. Malformed rows are rejected, not imputed.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<MetadataDataset> {
    let file = std::fs::File::open(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .from_reader(file);

    let names: Vec<String> = match (&schema.column_names, schema.has_header) {
        (Some(names), _) => {
            if schema.has_header {
                reader.headers()?;
            }
            names.clone()
        }
        (None, true) => reader.headers()?.iter().map(|s| s.trim().to_string()).collect(),
        (None, false) => {
            // peek width from the first record
            let mut probe = csv::ReaderBuilder::new()
                .has_headers(false)
                .from_path(path)?;
            let width = probe
                .records()
                .next()
                .transpose()?
                .map(|r| r.len())
                .unwrap_or(0);
            (0..width).map(|i| format!("c{i}")).collect()
        }
    };
    let resolved = resolve(schema, &names)?;

    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != names.len() {
            return Err(DatasetError::RowLength {
                row,
                expected: names.len(),
                found: record.len(),
            });
        }
        let label = parse_label(&record[resolved.label], row, resolved.label, &names[resolved.label])?;
        let category = match &resolved.rule {
            ResolvedRule::Column { index, a, b } => {
                let v = record[*index].trim();
                if v == a {
                    Category::A
                } else if v == b {
                    Category::B
                } else {
                    return Err(DatasetError::Parse {
                        row,
                        column: *index,
                        name: names[*index].clone(),
                        value: v.to_string(),
                        expected: "a category tag",
                    });
                }
            }
            ResolvedRule::AnyPositive(cols) => {
                let mut any = false;
                for &c in cols {
                    any |= parse_f64(&record[c], row, c, &names[c])? > 0.0;
                }
                if any {
                    Category::B
                } else {
                    Category::A
                }
            }
        };
        let features = resolved
            .features
            .iter()
            .map(|&c| parse_f64(&record[c], row, c, &names[c]))
            .collect::<Result<Vec<_>>>()?;
        points.push(LabeledPoint {
            id: points.len() as u64,
            features,
            label,
            category,
        });
    }
    let feature_names = resolved.features.iter().map(|&i| names[i].clone()).collect();
    MetadataDataset::new(points, feature_names)
}

/// Re-tags a raw Spambase dataset: category B iff any `char_freq_*` value is
/// positive. The char-frequency columns are removed from the features.
pub fn engineer_spambase_metadata(raw: &MetadataDataset) -> Result<MetadataDataset> {
    let char_cols: Vec<usize> = raw
        .feature_names()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with(CHAR_FREQ_PREFIX))
        .map(|(i, _)| i)
        .collect();
    if char_cols.is_empty() {
        return Err(DatasetError::NoCharFrequencyColumns);
    }
    let keep: Vec<usize> = (0..raw.n_features())
        .filter(|i| !char_cols.contains(i))
        .collect();
    let points = raw
        .points()
        .iter()
        .map(|p| LabeledPoint {
            id: p.id,
            features: keep.iter().map(|&i| p.features[i]).collect(),
            label: p.label,
            category: if char_cols.iter().any(|&i| p.features[i] > 0.0) {
                Category::B
            } else {
                Category::A
            },
        })
        .collect();
    let names = keep.iter().map(|&i| raw.feature_names()[i].clone()).collect();
    MetadataDataset::new(points, names)
}

/// Two-class, two-category Gaussian data with per-category difficulty.
///
/// Category A carries its class signal on feature 0, category B on feature 1,
/// so a learner needs examples from both categories. Feature 2 locates the
/// category; feature 3 is pure noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_per_category: usize,
    pub separation_a: f64,
    pub separation_b: f64,
}

impl SyntheticSpec {
    pub const N_FEATURES: usize = 4;

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<MetadataDataset> {
        if self.n_per_category == 0 {
            return Err(DatasetError::Synthetic("n_per_category must be at least 1"));
        }
        if !(self.separation_a > 0.0 && self.separation_b > 0.0) {
            return Err(DatasetError::Synthetic("separations must be positive"));
        }
        let mut points = Vec::with_capacity(2 * self.n_per_category);
        for category in [Category::A, Category::B] {
            for i in 0..self.n_per_category {
                let label = (i % 2) as u32;
                let sign = if label == 1 { 1.0 } else { -1.0 };
                let mut noise = || -> f64 { StandardNormal.sample(rng) };
                let (f0, f1, loc) = match category {
                    Category::A => (sign * self.separation_a / 2.0 + noise(), noise(), -1.5),
                    Category::B => (noise(), sign * self.separation_b / 2.0 + noise(), 1.5),
                };
                let f2 = loc + noise();
                let f3 = noise();
                points.push(LabeledPoint {
                    id: points.len() as u64,
                    features: vec![f0, f1, f2, f3],
                    label,
                    category,
                });
            }
        }
        MetadataDataset::new(points, vec!["x0".into(), "x1".into(), "x2".into(), "x3".into()])
    }
}

/// Synthetic data where category B has half the class separation of A.
pub fn synthetic_classification<R: Rng + ?Sized>(
    n_per_category: usize,
    separation: f64,
    rng: &mut R,
) -> Result<MetadataDataset> {
    SyntheticSpec {
        n_per_category,
        separation_a: separation,
        separation_b: separation / 2.0,
    }
    .generate(rng)
}
