//! Blocked, replicated experiment over training-set metadata balance.
//!
//! For each of `b` blocks a balance `(N_A_j, N_B_j)` is drawn uniformly from
//! `[1, B_A] × [1, B_B]`; each of its `z` replicates composes a fresh test set
//! at the population proportion, draws the training subsets from the
//! complement, trains and scores the learner. Replicates are independent and
//! run on the rayon pool; each one rebuilds its own random stream from
//! `(seed, block, replicate)`, so results do not depend on scheduling.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{Category, DatasetError, MetadataDataset, Proportion};
use crate::learner::{self, LearnerError, LearnerSpec, PerformanceMetric};
use crate::seed::{self, stream};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("design needs b >= 1 and z >= 1, got b={b}, z={z}")]
    InvalidDesign { b: usize, z: usize },
    #[error("category {category} has {available} points but its test share is {test}; no room for training")]
    NoRoomForTraining {
        category: Category,
        available: usize,
        test: usize,
    },
    #[error("only {available} distinct balances fit within the bounds, cannot place {b} blocks")]
    TooManyBlocks { b: usize, available: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("{invalid} of {total} runs failed (limit 5%); first failure: {first}")]
    TooManyFailures {
        invalid: usize,
        total: usize,
        first: String,
    },
    #[error("observations: {0}")]
    Schema(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Fraction of failed runs above which the experiment aborts.
pub const MAX_INVALID_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceDesign {
    pub b: usize,
    pub z: usize,
    pub metric: PerformanceMetric,
}

impl BalanceDesign {
    pub fn runs(&self) -> usize {
        self.b * self.z
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Membership {
    pub train: Vec<u64>,
    pub test: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceObservation {
    /// 1-based block index.
    pub block: usize,
    /// 1-based replicate index within the block.
    pub rep: usize,
    pub n_a: usize,
    pub n_b: usize,
    /// Observed score; oracle scores are stored unclamped.
    pub score: f64,
    pub valid: bool,
    pub membership: Option<Membership>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Provenance {
    pub n: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub p0: Proportion,
    pub b: usize,
    pub z: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub rows: Vec<BalanceObservation>,
    /// Per-category sampling upper bounds `(B_A, B_B)`.
    pub bounds: [usize; 2],
    pub provenance: Option<Provenance>,
}

pub const OBSERVATIONS_HEADER: [&str; 5] = ["block", "rep", "n_a", "n_b", "score"];

impl ExperimentData {
    pub fn from_observations(rows: Vec<BalanceObservation>, bounds: [usize; 2]) -> Self {
        ExperimentData {
            rows,
            bounds,
            provenance: None,
        }
    }

    fn valid_rows(&self) -> impl Iterator<Item = &BalanceObservation> {
        self.rows.iter().filter(|r| r.valid)
    }

    /// Balance matrix over valid rows.
    pub fn x(&self) -> Vec<[f64; 2]> {
        self.valid_rows().map(|r| [r.n_a as f64, r.n_b as f64]).collect()
    }

    pub fn y(&self) -> Vec<f64> {
        self.valid_rows().map(|r| r.score).collect()
    }

    pub fn bounds_f64(&self) -> [f64; 2] {
        [self.bounds[0] as f64, self.bounds[1] as f64]
    }

    /// Rows of the given blocks, in block order.
    pub fn select_blocks(&self, blocks: &[usize]) -> ExperimentData {
        let keep: HashSet<usize> = blocks.iter().copied().collect();
        ExperimentData {
            rows: self.rows.iter().filter(|r| keep.contains(&r.block)).cloned().collect(),
            bounds: self.bounds,
            provenance: self.provenance,
        }
    }

    pub fn block_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.rows.iter().map(|r| r.block).collect();
        ids.dedup();
        ids
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(OBSERVATIONS_HEADER)?;
        for r in &self.rows {
            let score = if r.valid { r.score.to_string() } else { "NaN".into() };
            w.write_record([
                r.block.to_string(),
                r.rep.to_string(),
                r.n_a.to_string(),
                r.n_b.to_string(),
                score,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses `observations.csv`; `bounds` come from the caller since the
    /// file does not carry them.
    pub fn read_csv<R: Read>(input: R, bounds: [usize; 2]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
        if header != OBSERVATIONS_HEADER {
            return Err(ExperimentError::Schema(format!(
                "expected header {:?}, found {:?}",
                OBSERVATIONS_HEADER.join(","),
                header.join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let int = |i: usize| -> Result<usize> {
                rec[i].trim().parse().map_err(|_| {
                    ExperimentError::Schema(format!("line {line}: bad {} value {:?}", OBSERVATIONS_HEADER[i], &rec[i]))
                })
            };
            let score: f64 = rec[4].trim().parse().map_err(|_| {
                ExperimentError::Schema(format!("line {line}: bad score value {:?}", &rec[4]))
            })?;
            rows.push(BalanceObservation {
                block: int(0)?,
                rep: int(1)?,
                n_a: int(2)?,
                n_b: int(3)?,
                score,
                valid: score.is_finite(),
                membership: None,
            });
        }
        if rows.is_empty() {
            return Err(ExperimentError::Schema("no observation rows".into()));
        }
        Ok(ExperimentData::from_observations(rows, bounds))
    }
}

pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Test-set counts `(t_A, t_B)`: ten percent of `n` split at `p0`, each
/// rounded half-up with a floor of one.
pub fn test_counts(n: usize, p0: Proportion) -> (usize, usize) {
    let t = |p: f64| round_half_up(0.1 * n as f64 * p).max(1);
    (t(p0.a), t(p0.b))
}

/// Sampling upper bounds `(N_A - t_A, N_B - t_B)`.
pub fn sampling_bounds(n_a: usize, n_b: usize, p0: Proportion) -> Result<[usize; 2]> {
    let (t_a, t_b) = test_counts(n_a + n_b, p0);
    for (category, available, test) in [(Category::A, n_a, t_a), (Category::B, n_b, t_b)] {
        if available <= test {
            return Err(ExperimentError::NoRoomForTraining {
                category,
                available,
                test,
            });
        }
    }
    Ok([n_a - t_a, n_b - t_b])
}

/// Draws a test set at the population proportion; returns `(test, rest)`.
pub fn compose_test_set<R: Rng + ?Sized>(
    dataset: &MetadataDataset,
    rng: &mut R,
) -> Result<(MetadataDataset, MetadataDataset)> {
    let (t_a, t_b) = test_counts(dataset.len(), dataset.p0());
    let test_a = dataset.samp(Category::A, t_a, rng)?;
    let test_b = dataset.samp(Category::B, t_b, rng)?;
    let test = test_a.union(&test_b);
    let rest = dataset.without(&test.ids());
    Ok((test, rest))
}

/// Draws a test set of the same size as [`compose_test_set`] uniformly,
/// ignoring category, so its composition follows the dataset's own balance.
pub fn compose_uniform_test_set<R: Rng + ?Sized>(
    dataset: &MetadataDataset,
    rng: &mut R,
) -> Result<(MetadataDataset, MetadataDataset)> {
    let (t_a, t_b) = test_counts(dataset.len(), dataset.p0());
    let t = (t_a + t_b).min(dataset.len());
    let picked = rand::seq::index::sample(rng, dataset.len(), t);
    let test = dataset.subset(picked.iter().map(|i| dataset.points()[i].clone()).collect());
    let rest = dataset.without(&test.ids());
    Ok((test, rest))
}

/// How each replicate's test set is composed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestComposition {
    /// Category counts fixed at the population proportion.
    #[default]
    Population,
    /// Experimental: uniform over the dataset. Known to pull decisions toward
    /// the current balance.
    Uniform,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExperimentOptions {
    /// Record train/test identities per run. Forces real subsampling even
    /// for the oracle, which otherwise only needs the counts.
    pub keep_membership: bool,
    pub test_composition: TestComposition,
}

/// Sampling bounds under `composition`. A uniform test set may take all of
/// its points from one category, so each bound reserves the whole test size.
pub fn sampling_bounds_for(dataset: &MetadataDataset, composition: TestComposition) -> Result<[usize; 2]> {
    match composition {
        TestComposition::Population => sampling_bounds(dataset.n_a(), dataset.n_b(), dataset.p0()),
        TestComposition::Uniform => {
            let (t_a, t_b) = test_counts(dataset.len(), dataset.p0());
            let t = t_a + t_b;
            for (category, available) in [(Category::A, dataset.n_a()), (Category::B, dataset.n_b())] {
                if available <= t {
                    return Err(ExperimentError::NoRoomForTraining {
                        category,
                        available,
                        test: t,
                    });
                }
            }
            Ok([dataset.n_a() - t, dataset.n_b() - t])
        }
    }
}

/// Draws `b` distinct balances uniformly from `[1, B_A] × [1, B_B]`.
fn draw_blocks<R: Rng + ?Sized>(b: usize, bounds: [usize; 2], rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let available = bounds[0] * bounds[1];
    if b > available {
        return Err(ExperimentError::TooManyBlocks { b, available });
    }
    let mut seen = HashSet::with_capacity(b);
    let mut blocks = Vec::with_capacity(b);
    while blocks.len() < b {
        let pair = (rng.random_range(1..=bounds[0]), rng.random_range(1..=bounds[1]));
        if seen.insert(pair) {
            blocks.push(pair);
        }
    }
    Ok(blocks)
}

struct RunOutcome {
    score: std::result::Result<f64, String>,
    membership: Option<Membership>,
}

fn run_one(
    dataset: &MetadataDataset,
    spec: &LearnerSpec,
    metric: PerformanceMetric,
    (n_a, n_b): (usize, usize),
    opts: ExperimentOptions,
    rng: &mut seed::Rng,
) -> Result<RunOutcome> {
    let sample = |rng: &mut seed::Rng| -> Result<(MetadataDataset, MetadataDataset)> {
        let (test, rest) = match opts.test_composition {
            TestComposition::Population => compose_test_set(dataset, rng)?,
            TestComposition::Uniform => compose_uniform_test_set(dataset, rng)?,
        };
        let train_a = rest.samp(Category::A, n_a, rng)?;
        let train_b = rest.samp(Category::B, n_b, rng)?;
        Ok((train_a.union(&train_b), test))
    };
    let membership_of = |train: &MetadataDataset, test: &MetadataDataset| Membership {
        train: train.points().iter().map(|p| p.id).collect(),
        test: test.points().iter().map(|p| p.id).collect(),
    };

    match spec {
        LearnerSpec::Oracle { noise_sd } => {
            let membership = if opts.keep_membership {
                let (train, test) = sample(rng)?;
                Some(membership_of(&train, &test))
            } else {
                None
            };
            let score = learner::oracle_accuracy(n_a as f64, n_b as f64, *noise_sd, rng).map_err(|e| e.to_string());
            Ok(RunOutcome { score, membership })
        }
        LearnerSpec::Forest(_) => {
            let (train, test) = sample(rng)?;
            let membership = opts.keep_membership.then(|| membership_of(&train, &test));
            let score = learner::train(spec, &train, rng)
                .and_then(|m| learner::evaluate(&m, &test, metric))
                .map_err(|e| e.to_string());
            Ok(RunOutcome { score, membership })
        }
    }
}

/// Runs the blocked metadata-balance experiment on `dataset`.
pub fn run_balance_experiment(
    dataset: &MetadataDataset,
    spec: &LearnerSpec,
    design: &BalanceDesign,
    seed: u64,
    opts: ExperimentOptions,
) -> Result<ExperimentData> {
    if design.b == 0 || design.z == 0 {
        return Err(ExperimentError::InvalidDesign {
            b: design.b,
            z: design.z,
        });
    }
    spec.validate()?;
    let bounds = sampling_bounds_for(dataset, opts.test_composition)?;
    let blocks = draw_blocks(design.b, bounds, &mut seed::rng_from(seed, &[stream::BLOCKS]))?;

    let jobs: Vec<(usize, usize)> = (0..design.b).flat_map(|j| (0..design.z).map(move |k| (j, k))).collect();
    let outcomes: Vec<Result<RunOutcome>> = jobs
        .par_iter()
        .map(|&(j, k)| {
            let mut rng = seed::rng_from(seed, &[stream::REPLICATE, j as u64, k as u64]);
            run_one(dataset, spec, design.metric, blocks[j], opts, &mut rng)
        })
        .collect();

    let mut rows = Vec::with_capacity(jobs.len());
    let mut first_failure = None;
    for (&(j, k), outcome) in jobs.iter().zip(outcomes) {
        let outcome = outcome?;
        let (n_a, n_b) = blocks[j];
        let (score, valid) = match outcome.score {
            Ok(s) => (s, true),
            Err(e) => {
                first_failure.get_or_insert(e);
                (f64::NAN, false)
            }
        };
        rows.push(BalanceObservation {
            block: j + 1,
            rep: k + 1,
            n_a,
            n_b,
            score,
            valid,
            membership: outcome.membership,
        });
    }
    let invalid = rows.iter().filter(|r| !r.valid).count();
    if invalid as f64 > MAX_INVALID_FRACTION * rows.len() as f64 {
        return Err(ExperimentError::TooManyFailures {
            invalid,
            total: rows.len(),
            first: first_failure.unwrap_or_default(),
        });
    }

    Ok(ExperimentData {
        rows,
        bounds,
        provenance: Some(Provenance {
            n: dataset.len(),
            n_a: dataset.n_a(),
            n_b: dataset.n_b(),
            p0: dataset.p0(),
            b: design.b,
            z: design.z,
            seed,
        }),
    })
}
