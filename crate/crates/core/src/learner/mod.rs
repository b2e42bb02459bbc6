//! Trainable-model contract, built-in learners and scoring.
//!
//! Two learners ship with the crate: a decision forest trained on real
//! points, and a synthetic accuracy oracle that maps a metadata balance
//! `(x1, x2)` straight to a noisy score, standing in for the whole
//! train-and-evaluate pipeline.

mod forest;
mod metrics;

pub use forest::{Forest, ForestParams, Tree};
pub use metrics::{score, ConfusionCounts, PerformanceMetric};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::MetadataDataset;

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("feature dimension mismatch: model expects {expected}, data has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("the oracle learner has no trainable model; call oracle_accuracy")]
    OracleNotTrainable,
    #[error("oracle undefined at (0, 0)")]
    OracleAtOrigin,
    #[error("oracle inputs must be finite and nonnegative, got ({0}, {1})")]
    OracleInput(f64, f64),
    #[error("invalid learner spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, LearnerError>;

pub const DEFAULT_ORACLE_NOISE_SD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LearnerSpec {
    Oracle { noise_sd: f64 },
    Forest(ForestParams),
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::Forest(ForestParams::default())
    }
}

impl LearnerSpec {
    pub fn oracle() -> Self {
        LearnerSpec::Oracle {
            noise_sd: DEFAULT_ORACLE_NOISE_SD,
        }
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self, LearnerSpec::Oracle { .. })
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Oracle { noise_sd } if !(*noise_sd >= 0.0) => {
                Err(LearnerError::InvalidSpec(format!("noise_sd {noise_sd} < 0")))
            }
            LearnerSpec::Forest(p) if p.tree_count == 0 => {
                Err(LearnerError::InvalidSpec("tree_count must be >= 1".into()))
            }
            LearnerSpec::Forest(p) if p.max_depth == Some(0) => {
                Err(LearnerError::InvalidSpec("max_depth must be >= 1".into()))
            }
            LearnerSpec::Forest(p) if p.min_leaf == 0 => {
                Err(LearnerError::InvalidSpec("min_leaf must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// What a model was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingFingerprint {
    pub size: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    forest: Forest,
    classes: Vec<u32>,
    n_features: usize,
    fingerprint: TrainingFingerprint,
}

impl TrainedModel {
    pub fn fingerprint(&self) -> TrainingFingerprint {
        self.fingerprint
    }

    /// A model fit to one class only predicts that class everywhere.
    pub fn is_single_class(&self) -> bool {
        self.classes.len() == 1
    }

    pub fn predict(&self, features: &[f64]) -> u32 {
        self.classes[self.forest.predict(features)]
    }
}

/// Trains a forest. Rows are ordered by point identity before resampling, so
/// the fitted model does not depend on the input row order.
pub fn train<R: Rng + ?Sized>(spec: &LearnerSpec, train_set: &MetadataDataset, rng: &mut R) -> Result<TrainedModel> {
    spec.validate()?;
    let LearnerSpec::Forest(params) = spec else {
        return Err(LearnerError::OracleNotTrainable);
    };
    if train_set.is_empty() {
        return Err(LearnerError::EmptyTrainingSet);
    }
    let seed: u64 = rng.random();
    let mut points: Vec<_> = train_set.points().iter().collect();
    points.sort_by_key(|p| p.id);

    let mut classes: Vec<u32> = points.iter().map(|p| p.label).collect();
    classes.sort_unstable();
    classes.dedup();
    let x: Vec<Vec<f64>> = points.iter().map(|p| p.features.clone()).collect();
    let y: Vec<usize> = points
        .iter()
        .map(|p| classes.binary_search(&p.label).expect("label collected above"))
        .collect();

    let forest = Forest::fit(&x, &y, classes.len(), params, seed);
    Ok(TrainedModel {
        forest,
        classes,
        n_features: train_set.n_features(),
        fingerprint: TrainingFingerprint {
            size: train_set.len(),
            n_a: train_set.n_a(),
            n_b: train_set.n_b(),
            seed,
        },
    })
}

pub fn evaluate(model: &TrainedModel, test_set: &MetadataDataset, metric: PerformanceMetric) -> Result<f64> {
    if test_set.is_empty() {
        return Err(LearnerError::EmptyTestSet);
    }
    if test_set.n_features() != model.n_features {
        return Err(LearnerError::DimensionMismatch {
            expected: model.n_features,
            found: test_set.n_features(),
        });
    }
    let truth: Vec<u32> = test_set.points().iter().map(|p| p.label).collect();
    let predicted: Vec<u32> = test_set
        .points()
        .iter()
        .map(|p| model.predict(&p.features))
        .collect();
    Ok(score(&truth, &predicted, metric))
}

/// Noiseless toy accuracy surface `1 - exp(-x1 x2 / (10 x1 + 15 x2))`.
pub fn oracle_mean(x1: f64, x2: f64) -> Result<f64> {
    if !(x1.is_finite() && x2.is_finite() && x1 >= 0.0 && x2 >= 0.0) {
        return Err(LearnerError::OracleInput(x1, x2));
    }
    if x1 == 0.0 && x2 == 0.0 {
        return Err(LearnerError::OracleAtOrigin);
    }
    Ok(1.0 - (-(x1 * x2) / (10.0 * x1 + 15.0 * x2)).exp())
}

/// Oracle mean plus Gaussian noise with standard deviation `noise_sd`.
pub fn oracle_accuracy<R: Rng + ?Sized>(x1: f64, x2: f64, noise_sd: f64, rng: &mut R) -> Result<f64> {
    let mean = oracle_mean(x1, x2)?;
    if noise_sd == 0.0 {
        return Ok(mean);
    }
    let normal = Normal::new(0.0, noise_sd)
        .map_err(|e| LearnerError::InvalidSpec(format!("noise_sd {noise_sd}: {e}")))?;
    Ok(mean + normal.sample(rng))
}
