//! Multi-step acquisition campaigns, comparator policies, and the two
//! diagnostic studies: metadata suitability and subsample robustness.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Hypergeometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance_experiment::{
    self, round_half_up, BalanceDesign, ExperimentData, ExperimentError, ExperimentOptions,
};
use crate::conic::{self, ConicError, StepOptions};
use crate::dataset::{Category, DatasetError, MetadataDataset};
use crate::learner::{self, LearnerError, LearnerSpec, PerformanceMetric};
use crate::seed::{self, stream};

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AcquisitionError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Policy {
    Gpaml,
    /// `n` points drawn uniformly from the pool, ignoring category.
    Random,
    /// `(n_A, n_B)` uniform over the `n + 1` splits.
    RandomAction,
    /// Category-A share `p` of every batch.
    FixedProportion(f64),
    AllA,
    AllB,
}

impl Policy {
    /// Fixed compositions stop the campaign when the pool runs short
    /// instead of substituting the other category.
    pub fn is_fixed_composition(&self) -> bool {
        matches!(self, Policy::FixedProportion(_) | Policy::AllA | Policy::AllB)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Gpaml => f.write_str("gpaml"),
            Policy::Random => f.write_str("random"),
            Policy::RandomAction => f.write_str("random-action"),
            Policy::FixedProportion(p) => write!(f, "fixed:{p}"),
            Policy::AllA => f.write_str("all-a"),
            Policy::AllB => f.write_str("all-b"),
        }
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "gpaml" => Ok(Policy::Gpaml),
            "random" => Ok(Policy::Random),
            "random-action" | "random_action" => Ok(Policy::RandomAction),
            "all-a" | "all_a" => Ok(Policy::AllA),
            "all-b" | "all_b" => Ok(Policy::AllB),
            other => {
                let p = other
                    .strip_prefix("fixed:")
                    .ok_or_else(|| {
                        format!("unknown policy {s:?} (expected gpaml, random, random-action, fixed:<p>, all-a, all-b)")
                    })?
                    .parse::<f64>()
                    .map_err(|e| format!("policy {s:?}: {e}"))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("policy {s:?}: proportion must lie in [0, 1]"));
                }
                Ok(Policy::FixedProportion(p))
            }
        }
    }
}

impl TryFrom<String> for Policy {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Policy> for String {
    fn from(p: Policy) -> String {
        p.to_string()
    }
}

/// Current training counts and what is left to acquire from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolState {
    pub n_a: usize,
    pub n_b: usize,
    pub pool_a: usize,
    pub pool_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyOutcome {
    Take { n_a: usize, n_b: usize, clamped: bool },
    Exhausted(String),
}

/// Moves a request onto what the pool holds, keeping the batch size.
fn clamp_to_pool(n_a: usize, n_b: usize, state: &PoolState) -> (usize, usize, bool) {
    let n = n_a + n_b;
    if n_a > state.pool_a {
        (state.pool_a, n - state.pool_a, true)
    } else if n_b > state.pool_b {
        (n - state.pool_b, state.pool_b, true)
    } else {
        (n_a, n_b, false)
    }
}

/// Chooses the next batch split. `proposal` carries the GPAML decision and
/// is required for [`Policy::Gpaml`] only.
pub fn apply_policy<R: Rng + ?Sized>(
    policy: Policy,
    state: &PoolState,
    n: usize,
    proposal: Option<(usize, usize)>,
    rng: &mut R,
) -> Result<PolicyOutcome> {
    if state.pool_a + state.pool_b < n {
        return Ok(PolicyOutcome::Exhausted(format!(
            "pool holds {} points, batch needs {n}",
            state.pool_a + state.pool_b
        )));
    }
    let requested = match policy {
        Policy::Gpaml => {
            proposal.ok_or_else(|| AcquisitionError::Config("gpaml policy needs a decision".into()))?
        }
        Policy::Random => {
            let total = (state.pool_a + state.pool_b) as u64;
            let h = Hypergeometric::new(total, state.pool_a as u64, n as u64)
                .map_err(|e| AcquisitionError::Config(format!("hypergeometric draw: {e}")))?;
            let a = h.sample(rng) as usize;
            (a, n - a)
        }
        Policy::RandomAction => {
            let k = rng.random_range(0..=n);
            (n - k, k)
        }
        Policy::FixedProportion(p) => {
            let a = round_half_up(p * n as f64).min(n);
            (a, n - a)
        }
        Policy::AllA => (n, 0),
        Policy::AllB => (0, n),
    };
    if policy.is_fixed_composition() {
        let (a, b) = requested;
        if a > state.pool_a || b > state.pool_b {
            return Ok(PolicyOutcome::Exhausted(format!(
                "{policy} needs ({a}, {b}) but the pool holds ({}, {})",
                state.pool_a, state.pool_b
            )));
        }
        return Ok(PolicyOutcome::Take {
            n_a: a,
            n_b: b,
            clamped: false,
        });
    }
    let (n_a, n_b, clamped) = clamp_to_pool(requested.0, requested.1, state);
    Ok(PolicyOutcome::Take { n_a, n_b, clamped })
}

/// How the initial training set is composed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartRule {
    Fixed { n_a: usize, n_b: usize },
    /// Count of `category` uniform on `[lo, hi]`; the rest of `n_start`
    /// comes from the other category.
    Uniform { category: Category, lo: usize, hi: usize },
}

impl StartRule {
    fn draw<R: Rng + ?Sized>(&self, n_start: usize, rng: &mut R) -> Result<(usize, usize)> {
        match *self {
            StartRule::Fixed { n_a, n_b } => {
                if n_a + n_b != n_start {
                    return Err(AcquisitionError::Config(format!(
                        "start balance ({n_a}, {n_b}) does not sum to n_start {n_start}"
                    )));
                }
                Ok((n_a, n_b))
            }
            StartRule::Uniform { category, lo, hi } => {
                if lo > hi || hi > n_start {
                    return Err(AcquisitionError::Config(format!(
                        "start range [{lo}, {hi}] does not fit n_start {n_start}"
                    )));
                }
                let c = rng.random_range(lo..=hi);
                Ok(match category {
                    Category::A => (c, n_start - c),
                    Category::B => (n_start - c, c),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunConfig {
    pub n_start: usize,
    pub n_stop: usize,
    pub step: usize,
    pub design: BalanceDesign,
    pub q: usize,
    pub holdout: usize,
    pub start: StartRule,
    pub seed: u64,
    #[serde(skip)]
    pub experiment: ExperimentOptions,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_start >= self.n_stop {
            return Err(AcquisitionError::Config(format!(
                "n_start {} must be below n_stop {}",
                self.n_start, self.n_stop
            )));
        }
        if self.step == 0 || !(self.n_stop - self.n_start).is_multiple_of(self.step) {
            return Err(AcquisitionError::Config(format!(
                "n_stop - n_start = {} is not a positive multiple of step {}",
                self.n_stop - self.n_start,
                self.step
            )));
        }
        if self.holdout == 0 {
            return Err(AcquisitionError::Config("holdout must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.n_stop - self.n_start) / self.step
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub n: usize,
    pub n_a_total: usize,
    pub n_b_total: usize,
    pub chosen_n_a: usize,
    pub chosen_n_b: usize,
    pub oos_score: f64,
    pub clamped: bool,
    pub wall_time: Duration,
}

impl TraceRow {
    pub fn prop_a(&self) -> f64 {
        self.n_a_total as f64 / self.n as f64
    }
}

#[derive(Debug, Clone)]
pub struct AcquisitionTrace {
    pub policy: Policy,
    pub rows: Vec<TraceRow>,
    /// Why the campaign stopped before `n_stop`, if it did.
    pub termination: Option<String>,
    pub config: RunConfig,
}

impl AcquisitionTrace {
    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("trace always holds the initial row")
    }

    pub fn completed(&self) -> bool {
        self.termination.is_none()
    }
}

pub const TRACE_HEADER: [&str; 10] = [
    "step",
    "N",
    "n_a_total",
    "n_b_total",
    "prop_a",
    "chosen_n_a",
    "chosen_n_b",
    "policy",
    "oos_score",
    "clamped",
];

/// Writes `trace.csv`. Wall time is left out so reruns compare byte-for-byte.
pub fn write_trace_csv<W: Write>(trace: &AcquisitionTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    let policy = trace.policy.to_string();
    for r in &trace.rows {
        w.write_record([
            r.step.to_string(),
            r.n.to_string(),
            r.n_a_total.to_string(),
            r.n_b_total.to_string(),
            r.prop_a().to_string(),
            r.chosen_n_a.to_string(),
            r.chosen_n_b.to_string(),
            policy.clone(),
            r.oos_score.to_string(),
            u8::from(r.clamped).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Holdout of `size` points at the population proportion.
fn carve_holdout<R: Rng + ?Sized>(dataset: &MetadataDataset, size: usize, rng: &mut R) -> Result<MetadataDataset> {
    let h_a = round_half_up(size as f64 * dataset.p0().a).min(size);
    let a = dataset.samp(Category::A, h_a, rng)?;
    let b = dataset.samp(Category::B, size - h_a, rng)?;
    Ok(a.union(&b))
}

fn take<R: Rng + ?Sized>(pool: &MetadataDataset, n_a: usize, n_b: usize, rng: &mut R) -> Result<MetadataDataset> {
    let a = pool.samp(Category::A, n_a, rng)?;
    let b = pool.samp(Category::B, n_b, rng)?;
    Ok(a.union(&b))
}

fn oos_score(
    spec: &LearnerSpec,
    train: &MetadataDataset,
    holdout: &MetadataDataset,
    metric: PerformanceMetric,
    rng: &mut seed::Rng,
) -> Result<f64> {
    match spec {
        LearnerSpec::Oracle { .. } => Ok(learner::oracle_mean(train.n_a() as f64, train.n_b() as f64)?),
        LearnerSpec::Forest(_) => {
            let model = learner::train(spec, train, rng)?;
            Ok(learner::evaluate(&model, holdout, metric)?)
        }
    }
}

/// Decision for one GPAML step, or the reason the step cannot be taken.
fn gpaml_proposal(
    current: &MetadataDataset,
    spec: &LearnerSpec,
    config: &RunConfig,
    step: usize,
) -> Result<std::result::Result<(usize, usize), String>> {
    let data = balance_experiment::run_balance_experiment(
        current,
        spec,
        &config.design,
        seed::derive_seed(config.seed, &[stream::EXPERIMENT, step as u64]),
        config.experiment,
    );
    let data = match data {
        Ok(d) => d,
        Err(e @ (ExperimentError::NoRoomForTraining { .. } | ExperimentError::TooManyBlocks { .. })) => {
            return Ok(Err(format!("balance experiment not possible: {e}")))
        }
        Err(e) => return Err(e.into()),
    };
    let opts = StepOptions {
        q: config.q,
        ..Default::default()
    };
    match conic::gpaml_step(&data, current.n_a(), current.n_b(), config.step, opts) {
        Ok(d) => Ok(Ok(d.chosen)),
        Err(e @ (ConicError::Infeasible { .. } | ConicError::InvalidArgs(_))) => Ok(Err(format!("no decision: {e}"))),
        Err(e) => Err(e.into()),
    }
}

/// Runs one campaign from `n_start` to `n_stop` under `policy`.
///
/// The holdout is carved first at the population proportion and never
/// touched again; the training set and the pool stay disjoint from it and
/// from each other. For the oracle, the out-of-sample score is the
/// noiseless surface at the current balance.
pub fn run_campaign(
    dataset: &MetadataDataset,
    spec: &LearnerSpec,
    policy: Policy,
    config: &RunConfig,
) -> Result<AcquisitionTrace> {
    config.validate()?;
    spec.validate()?;
    let master = config.seed;
    let holdout = carve_holdout(dataset, config.holdout, &mut seed::rng_from(master, &[stream::HOLDOUT]))?;
    let mut pool = dataset.without(&holdout.ids());

    let mut init_rng = seed::rng_from(master, &[stream::INITIAL]);
    let (a0, b0) = config.start.draw(config.n_start, &mut init_rng)?;
    let mut current = take(&pool, a0, b0, &mut init_rng)?;
    pool = pool.without(&current.ids());

    let started = Instant::now();
    let first = oos_score(
        spec,
        &current,
        &holdout,
        config.design.metric,
        &mut seed::rng_from(master, &[stream::TRAIN, 0]),
    )?;
    let mut rows = vec![TraceRow {
        step: 0,
        n: current.len(),
        n_a_total: current.n_a(),
        n_b_total: current.n_b(),
        chosen_n_a: 0,
        chosen_n_b: 0,
        oos_score: first,
        clamped: false,
        wall_time: started.elapsed(),
    }];
    let mut termination = None;

    for step in 1..=config.steps() {
        let started = Instant::now();
        let proposal = if policy == Policy::Gpaml {
            match gpaml_proposal(&current, spec, config, step)? {
                Ok(p) => Some(p),
                Err(reason) => {
                    termination = Some(format!("step {step}: {reason}"));
                    break;
                }
            }
        } else {
            None
        };
        let state = PoolState {
            n_a: current.n_a(),
            n_b: current.n_b(),
            pool_a: pool.n_a(),
            pool_b: pool.n_b(),
        };
        let mut policy_rng = seed::rng_from(master, &[stream::POLICY, step as u64]);
        let (n_a, n_b, clamped) = match apply_policy(policy, &state, config.step, proposal, &mut policy_rng)? {
            PolicyOutcome::Take { n_a, n_b, clamped } => (n_a, n_b, clamped),
            PolicyOutcome::Exhausted(reason) => {
                termination = Some(format!("step {step}: {reason}"));
                break;
            }
        };
        let batch = take(&pool, n_a, n_b, &mut seed::rng_from(master, &[stream::ACQUIRE, step as u64]))?;
        pool = pool.without(&batch.ids());
        current = current.union(&batch);

        let score = oos_score(
            spec,
            &current,
            &holdout,
            config.design.metric,
            &mut seed::rng_from(master, &[stream::TRAIN, step as u64]),
        )?;
        rows.push(TraceRow {
            step,
            n: current.len(),
            n_a_total: current.n_a(),
            n_b_total: current.n_b(),
            chosen_n_a: n_a,
            chosen_n_b: n_b,
            oos_score: score,
            clamped,
            wall_time: started.elapsed(),
        });
    }

    Ok(AcquisitionTrace {
        policy,
        rows,
        termination,
        config: *config,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuitabilityConfig {
    pub reps: usize,
    pub major: usize,
    pub minor: usize,
    pub holdout: usize,
    pub metric: PerformanceMetric,
}

impl Default for SuitabilityConfig {
    fn default() -> Self {
        SuitabilityConfig {
            reps: 100,
            major: 90,
            minor: 10,
            holdout: 500,
            metric: PerformanceMetric::Ccr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuitabilityReport {
    /// `(majority category, rep, score)`, category A first.
    pub scores: Vec<(Category, usize, f64)>,
}

impl SuitabilityReport {
    pub fn scores_for(&self, category: Category) -> Vec<f64> {
        self.scores
            .iter()
            .filter(|(c, _, _)| *c == category)
            .map(|(_, _, s)| *s)
            .collect()
    }

    pub fn mean(&self, category: Category) -> f64 {
        let s = self.scores_for(category);
        s.iter().sum::<f64>() / s.len() as f64
    }

    /// Mean score with A in the majority minus mean with B in the majority.
    pub fn mean_difference(&self) -> f64 {
        self.mean(Category::A) - self.mean(Category::B)
    }

    /// Standard error of [`Self::mean_difference`].
    pub fn difference_se(&self) -> f64 {
        let var = |c: Category| {
            let s = self.scores_for(c);
            let m = s.iter().sum::<f64>() / s.len() as f64;
            let v = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (s.len().max(2) - 1) as f64;
            v / s.len() as f64
        };
        (var(Category::A) + var(Category::B)).sqrt()
    }
}

pub const SUITABILITY_HEADER: [&str; 3] = ["category", "rep", "score"];

pub fn write_suitability_csv<W: Write>(report: &SuitabilityReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUITABILITY_HEADER)?;
    for (c, rep, s) in &report.scores {
        w.write_record([c.to_string(), rep.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains on `major` points from one category plus `minor` from the other,
/// scores on a fresh population-proportion holdout, and repeats `reps`
/// times per category.
pub fn metadata_suitability_check(
    dataset: &MetadataDataset,
    spec: &LearnerSpec,
    config: &SuitabilityConfig,
    seed: u64,
) -> Result<SuitabilityReport> {
    spec.validate()?;
    if config.reps == 0 {
        return Err(AcquisitionError::Config("suitability reps must be >= 1".into()));
    }
    let jobs: Vec<(Category, usize)> = [Category::A, Category::B]
        .into_iter()
        .flat_map(|c| (1..=config.reps).map(move |r| (c, r)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(c, rep)| {
            let mut rng = seed::rng_from(seed, &[stream::SUITABILITY, c as u64, rep as u64]);
            let (x_a, x_b) = match c {
                Category::A => (config.major, config.minor),
                Category::B => (config.minor, config.major),
            };
            let score = match spec {
                LearnerSpec::Oracle { noise_sd } => learner::oracle_accuracy(x_a as f64, x_b as f64, *noise_sd, &mut rng)?,
                LearnerSpec::Forest(_) => {
                    let holdout = carve_holdout(dataset, config.holdout, &mut rng)?;
                    let rest = dataset.without(&holdout.ids());
                    let train = take(&rest, x_a, x_b, &mut rng)?;
                    let model = learner::train(spec, &train, &mut rng)?;
                    learner::evaluate(&model, &holdout, config.metric)?
                }
            };
            Ok((c, rep, score))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuitabilityReport { scores })
}

/// Which robustness-study decisions count as good.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoodDecision {
    MajorityA,
    MajorityB,
    /// `|n_A - target| <= tol`.
    Within { target: usize, tol: usize },
}

impl GoodDecision {
    pub fn holds(&self, (n_a, n_b): (usize, usize)) -> bool {
        match *self {
            GoodDecision::MajorityA => n_a > n_b,
            GoodDecision::MajorityB => n_b > n_a,
            GoodDecision::Within { target, tol } => n_a.abs_diff(target) <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    pub b_total: usize,
    pub z: usize,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub n: usize,
    pub q: usize,
    pub metric: PerformanceMetric,
    pub good: GoodDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub size: usize,
    pub rep: usize,
    pub chosen: (usize, usize),
    pub good: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeSummary {
    pub size: usize,
    pub good_fraction: f64,
    pub mean_n_a: f64,
    pub var_n_a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub rows: Vec<RobustnessRow>,
    pub summaries: Vec<SizeSummary>,
}

pub const ROBUSTNESS_HEADER: [&str; 5] = ["size", "rep", "chosen_n_a", "chosen_n_b", "good"];

pub fn write_robustness_csv<W: Write>(report: &RobustnessReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROBUSTNESS_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.size.to_string(),
            r.rep.to_string(),
            r.chosen.0.to_string(),
            r.chosen.1.to_string(),
            u8::from(r.good).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn summarize(size: usize, rows: &[RobustnessRow]) -> SizeSummary {
    let n = rows.len() as f64;
    let good = rows.iter().filter(|r| r.good).count() as f64 / n;
    let mean = rows.iter().map(|r| r.chosen.0 as f64).sum::<f64>() / n;
    let var = if rows.len() > 1 {
        rows.iter().map(|r| (r.chosen.0 as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    SizeSummary {
        size,
        good_fraction: good,
        mean_n_a: mean,
        var_n_a: var,
    }
}

/// Runs one balance experiment with `b_total` blocks on `dataset`, then for
/// each subset size repeatedly decides from a random subset of the blocks
/// (all replicates of each chosen block).
pub fn subsample_robustness_study(
    dataset: &MetadataDataset,
    spec: &LearnerSpec,
    config: &RobustnessConfig,
    seed: u64,
) -> Result<RobustnessReport> {
    if let Some(&too_big) = config.sizes.iter().find(|&&s| s > config.b_total || s == 0) {
        return Err(AcquisitionError::Config(format!(
            "subset size {too_big} must lie in [1, b_total = {}]",
            config.b_total
        )));
    }
    if config.reps == 0 {
        return Err(AcquisitionError::Config("robustness reps must be >= 1".into()));
    }
    let design = BalanceDesign {
        b: config.b_total,
        z: config.z,
        metric: config.metric,
    };
    let data = balance_experiment::run_balance_experiment(
        dataset,
        spec,
        &design,
        seed::derive_seed(seed, &[stream::EXPERIMENT]),
        ExperimentOptions::default(),
    )?;
    let blocks = data.block_ids();
    let jobs: Vec<(usize, usize, usize)> = config
        .sizes
        .iter()
        .enumerate()
        .flat_map(|(si, &size)| (1..=config.reps).map(move |rep| (si, size, rep)))
        .collect();
    let opts = StepOptions {
        q: config.q,
        ..Default::default()
    };
    let decide = |subset: &ExperimentData| conic::gpaml_step(subset, dataset.n_a(), dataset.n_b(), config.n, opts);

    let rows = jobs
        .par_iter()
        .map(|&(si, size, rep)| {
            let mut rng = seed::rng_from(seed, &[stream::ROBUSTNESS, si as u64, rep as u64]);
            let mut picked: Vec<usize> = index::sample(&mut rng, blocks.len(), size)
                .iter()
                .map(|i| blocks[i])
                .collect();
            picked.sort_unstable();
            let d = decide(&data.select_blocks(&picked))?;
            Ok(RobustnessRow {
                size,
                rep,
                chosen: d.chosen,
                good: config.good.holds(d.chosen),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = config
        .sizes
        .iter()
        .map(|&size| {
            let subset: Vec<RobustnessRow> = rows.iter().filter(|r| r.size == size).cloned().collect();
            summarize(size, &subset)
        })
        .collect();
    Ok(RobustnessReport { rows, summaries })
}
