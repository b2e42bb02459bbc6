//! Conic extrapolation and the acquisition decision.
//!
//! Adding `n` points to a balance `(N_A, N_B)` can end at any of the `n + 1`
//! rows of the transect. The surrogate is only trusted inside the explored
//! box, so each row is evaluated at scaled-down copies of the transect that
//! share its ending proportions (the cone), and the predictions are averaged
//! with weights growing toward the largest scale.
//!
//! Row `k` (0-based) of a transect is the move `(n - k, k)`: row 0 spends the
//! whole batch on category A, row `n` on category B.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::balance_experiment::ExperimentData;
use crate::gp::{self, FitOptions, GPFit, GpError};

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),
    #[error("no feasible cone: smallest scale {s_min} exceeds largest {s_max}")]
    Infeasible { s_min: f64, s_max: f64 },
    #[error("experiment data has no valid observations")]
    NoData,
    #[error("prediction matrix is {rows}x{cols}, expected {exp_rows}x{exp_cols}")]
    Shape {
        rows: usize,
        cols: usize,
        exp_rows: usize,
        exp_cols: usize,
    },
    #[error(transparent)]
    Gp(#[from] GpError),
}

pub type Result<T> = std::result::Result<T, ConicError>;

pub const DEFAULT_Q: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct TransectMatrix {
    pub n_a: usize,
    pub n_b: usize,
    pub n: usize,
}

impl TransectMatrix {
    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Ending balance of row `k`.
    pub fn row(&self, k: usize) -> [f64; 2] {
        [(self.n_a + self.n - k) as f64, (self.n_b + k) as f64]
    }

    pub fn rows(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|k| self.row(k)).collect()
    }

    /// Move `(n_A, n_B)` taken by row `k`.
    pub fn action(&self, k: usize) -> (usize, usize) {
        (self.n - k, k)
    }

    pub fn ending_prop_a(&self, k: usize) -> f64 {
        (self.n_a + self.n - k) as f64 / (self.n_a + self.n_b + self.n) as f64
    }

    pub fn current_prop_a(&self) -> f64 {
        self.n_a as f64 / (self.n_a + self.n_b) as f64
    }
}

pub fn build_transect(n_a: usize, n_b: usize, n: usize) -> Result<TransectMatrix> {
    if n_a == 0 || n_b == 0 || n == 0 {
        return Err(ConicError::InvalidArgs(format!(
            "transect needs N_A, N_B, n >= 1, got ({n_a}, {n_b}, {n})"
        )));
    }
    Ok(TransectMatrix { n_a, n_b, n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLine {
    /// Increasing scale factors.
    pub scales: Vec<f64>,
    /// `s_i · (N_A, N_B)`.
    pub locations: Vec<[f64; 2]>,
    pub bounds: [f64; 2],
}

/// `q` equally spaced scales between the smallest reference that keeps two
/// points per category and the largest whose transect stays inside `bounds`.
pub fn reference_locations(n_a: usize, n_b: usize, n: usize, bounds: [f64; 2], q: usize) -> Result<ReferenceLine> {
    build_transect(n_a, n_b, n)?;
    if q < 2 {
        return Err(ConicError::InvalidArgs(format!("q must be >= 2, got {q}")));
    }
    if !bounds.iter().all(|b| b.is_finite() && *b > 0.0) {
        return Err(ConicError::InvalidArgs(format!("bounds must be positive, got {bounds:?}")));
    }
    let (a, b) = (n_a as f64, n_b as f64);
    let s_max = (bounds[0] / (a + n as f64)).min(bounds[1] / (b + n as f64));
    let s_min = (2.0 / a.min(b)).max(0.05 * s_max);
    if s_min > s_max {
        return Err(ConicError::Infeasible { s_min, s_max });
    }
    let scales: Vec<f64> = (0..q)
        .map(|i| {
            if i == q - 1 {
                s_max
            } else {
                s_min + (s_max - s_min) * i as f64 / (q - 1) as f64
            }
        })
        .collect();
    let locations = scales.iter().map(|s| [s * a, s * b]).collect();
    Ok(ReferenceLine {
        scales,
        locations,
        bounds,
    })
}

/// Weights proportional to scale, normalized to sum to one.
pub fn linear_weights(scales: &[f64]) -> Vec<f64> {
    let total: f64 = scales.iter().sum();
    scales.iter().map(|s| s / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeFan {
    pub transect: TransectMatrix,
    pub scales: Vec<f64>,
    pub weights: Vec<f64>,
    /// Equivalent move sizes `ΣR_i / N`.
    pub move_scales: Vec<f64>,
}

impl ConeFan {
    pub fn q(&self) -> usize {
        self.scales.len()
    }

    /// Row `k` of reference transect `i`.
    pub fn point(&self, k: usize, i: usize) -> [f64; 2] {
        let r = self.transect.row(k);
        let m = self.move_scales[i];
        [m * r[0], m * r[1]]
    }

    /// All fan points, transect-major: index `i * (n + 1) + k`.
    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.q())
            .flat_map(|i| (0..self.transect.len()).map(move |k| (k, i)))
            .map(|(k, i)| self.point(k, i))
            .collect()
    }
}

/// Scales the transect to each reference location. `n_total` is the size the
/// references are measured against, normally `N_A + N_B`.
pub fn reference_transects(refs: &ReferenceLine, transect: &TransectMatrix, n_total: usize) -> Result<ConeFan> {
    if n_total == 0 {
        return Err(ConicError::InvalidArgs("N must be >= 1".into()));
    }
    let move_scales = refs
        .locations
        .iter()
        .map(|r| (r[0] + r[1]) / n_total as f64)
        .collect();
    Ok(ConeFan {
        transect: transect.clone(),
        scales: refs.scales.clone(),
        weights: linear_weights(&refs.scales),
        move_scales,
    })
}

/// Transect and fan for a step from `(n_a, n_b)`.
pub fn cone(n_a: usize, n_b: usize, n: usize, bounds: [f64; 2], q: usize) -> Result<ConeFan> {
    let t = build_transect(n_a, n_b, n)?;
    let refs = reference_locations(n_a, n_b, n, bounds, q)?;
    reference_transects(&refs, &t, n_a + n_b)
}

/// `G = 𝒴 w`.
pub fn integrate(y: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    (0..y.nrows())
        .map(|k| y.row(k).iter().zip(w).map(|(v, wi)| v * wi).sum())
        .collect()
}

/// Relative tolerance under which two integrated values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Index of the largest `G`. Ties go to the row whose ending proportion is
/// closest to the current one, then to the smaller index.
pub fn argmax_with_tiebreak(g: &[f64], transect: &TransectMatrix) -> usize {
    let best = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * best.abs();
    let current = transect.current_prop_a();
    let mut chosen = None::<(usize, f64)>;
    for (k, &v) in g.iter().enumerate() {
        if v < best - tol {
            continue;
        }
        let d = (transect.ending_prop_a(k) - current).abs();
        match chosen {
            Some((_, dc)) if dc <= d + TIE_TOLERANCE => {}
            _ => chosen = Some((k, d)),
        }
    }
    chosen.map_or(0, |(k, _)| k)
}

#[derive(Debug, Clone)]
pub struct AcquisitionDecision {
    /// `(n_A, n_B)` to acquire.
    pub chosen: (usize, usize),
    /// 0-based transect row of the decision.
    pub argmax: usize,
    pub g: Vec<f64>,
    /// Predicted means, `(n + 1) × q`.
    pub y: DMatrix<f64>,
    /// Predictive variances matching `y`, for reporting.
    pub variance: Option<DMatrix<f64>>,
    pub fan: ConeFan,
    pub fit: Option<GPFit>,
}

/// Decision from a prediction matrix over `fan`.
pub fn decide(fan: ConeFan, y: DMatrix<f64>, variance: Option<DMatrix<f64>>) -> Result<AcquisitionDecision> {
    let (rows, cols) = (fan.transect.len(), fan.q());
    if y.shape() != (rows, cols) {
        return Err(ConicError::Shape {
            rows: y.nrows(),
            cols: y.ncols(),
            exp_rows: rows,
            exp_cols: cols,
        });
    }
    let g = integrate(&y, &fan.weights);
    let argmax = argmax_with_tiebreak(&g, &fan.transect);
    Ok(AcquisitionDecision {
        chosen: fan.transect.action(argmax),
        argmax,
        g,
        y,
        variance,
        fan,
        fit: None,
    })
}

fn fan_matrix(fan: &ConeFan, values: &[f64]) -> DMatrix<f64> {
    let rows = fan.transect.len();
    DMatrix::from_fn(rows, fan.q(), |k, i| values[i * rows + k])
}

/// Decision with the fan evaluated on a known surface instead of a surrogate.
pub fn decide_on_surface<F>(fan: ConeFan, surface: F) -> Result<AcquisitionDecision>
where
    F: Fn([f64; 2]) -> f64 + Sync,
{
    let values: Vec<f64> = fan.points().par_iter().map(|&p| surface(p)).collect();
    let y = fan_matrix(&fan, &values);
    decide(fan, y, None)
}

#[derive(Debug, Clone, Copy)]
pub struct StepOptions {
    pub q: usize,
    /// GP fit settings; bounds are always taken from the experiment data.
    pub fit: Option<FitOptions>,
    /// Also compute predictive variances over the fan.
    pub with_variance: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            q: DEFAULT_Q,
            fit: None,
            with_variance: false,
        }
    }
}

/// Fits the surrogate to `data`, predicts over the cone from `(n_a, n_b)` and
/// returns the acquisition decision for a batch of `n`.
pub fn gpaml_step(data: &ExperimentData, n_a: usize, n_b: usize, n: usize, opts: StepOptions) -> Result<AcquisitionDecision> {
    let x = data.x();
    if x.is_empty() {
        return Err(ConicError::NoData);
    }
    let bounds = data.bounds_f64();
    let fan = cone(n_a, n_b, n, bounds, opts.q)?;

    let mut fit_opts = opts.fit.unwrap_or_else(|| FitOptions::new(bounds));
    fit_opts.bounds = bounds;
    let fit = gp::fit_gp(&x, &data.y(), &fit_opts)?;

    let points = fan.points();
    let (mean, variance) = if opts.with_variance {
        let (m, v) = fit.predict_marginal(&points)?;
        (m, Some(fan_matrix(&fan, &v)))
    } else {
        (fit.predict_mean(&points)?, None)
    };
    let y = fan_matrix(&fan, &mean);
    let mut decision = decide(fan, y, variance)?;
    decision.fit = Some(fit);
    Ok(decision)
}

pub const DECISION_HEADER: [&str; 5] = ["k", "n_a", "n_b", "ending_prop_a", "G"];
pub const CHOICE_HEADER: [&str; 3] = ["k", "n_a", "n_b"];
pub const CONE_HEADER: [&str; 8] = ["transect", "scale", "weight", "k", "x_a", "x_b", "mean", "variance"];

/// One row per transect entry; `k` is 1-based.
pub fn write_decision_csv<W: Write>(d: &AcquisitionDecision, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DECISION_HEADER)?;
    let t = &d.fan.transect;
    for (k, g) in d.g.iter().enumerate() {
        let (a, b) = t.action(k);
        w.write_record([
            (k + 1).to_string(),
            a.to_string(),
            b.to_string(),
            t.ending_prop_a(k).to_string(),
            g.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The chosen row alone.
pub fn write_choice_csv<W: Write>(d: &AcquisitionDecision, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CHOICE_HEADER)?;
    w.write_record([
        (d.argmax + 1).to_string(),
        d.chosen.0.to_string(),
        d.chosen.1.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Every fan point with its predicted mean; variance is empty when not computed.
pub fn write_cone_csv<W: Write>(d: &AcquisitionDecision, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONE_HEADER)?;
    let fan = &d.fan;
    for i in 0..fan.q() {
        for k in 0..fan.transect.len() {
            let p = fan.point(k, i);
            let var = d.variance.as_ref().map_or(String::new(), |v| v[(k, i)].to_string());
            w.write_record([
                (i + 1).to_string(),
                fan.scales[i].to_string(),
                fan.weights[i].to_string(),
                (k + 1).to_string(),
                p[0].to_string(),
                p[1].to_string(),
                d.y[(k, i)].to_string(),
                var,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
