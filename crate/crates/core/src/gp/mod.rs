//! Homoskedastic Gaussian-process regression on two-dimensional balances.
//!
//! The covariance is squared exponential with an isotropic lengthscale and a
//! nugget that applies to training diagonal entries only:
//!
//! ```text
//! Σ(x_i, x_j) = τ² (exp(-‖x_i - x_j‖² / θ) + g·1[i = j])
//! ```
//!
//! Inputs are scaled into `[0, 1]²` by fixed per-dimension bounds and
//! responses are centered by their mean. The scale τ² is profiled out, and
//! `(log θ, log g)` is fitted by multi-start bounded Nelder–Mead.
//!
//! Replicated designs are handled exactly through their unique inputs. With
//! `b` unique inputs of multiplicities `a_i`, group means `ȳ` and
//! within-group sum of squares `S`, the full `r × r` correlation `K` obeys
//!
//! ```text
//! yᵀK⁻¹y = S / g + ȳᵀ M⁻¹ ȳ,     log|K| = (r - b) log g + log|M| + Σ log a_i
//! ```
//!
//! where `M = C + diag(g / a_i)` is `b × b`. Predictions likewise only need
//! `M`, so fitting costs `O(b³)` instead of `O(r³)`. Without replicates `M`
//! is exactly `K`.

mod nelder_mead;

pub use nelder_mead::{minimize, Minimum, Options as NelderMeadOptions};

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("need at least {min} runs, got {got}")]
    TooFewRuns { min: usize, got: usize },
    #[error("x has {x} rows but y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("normalization bounds must be positive, got {0:?}")]
    InvalidBounds([f64; 2]),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("responses are constant: profiled scale is zero")]
    Degenerate,
    #[error("covariance is numerically singular even with jitter {0:e}")]
    Singular(f64),
    #[error("every likelihood start failed; best diagnostic: {0}")]
    AllStartsFailed(String),
}

pub type Result<T> = std::result::Result<T, GpError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GPHyperparams {
    pub tau2: f64,
    pub theta: f64,
    pub g: f64,
}

impl GPHyperparams {
    fn check(&self) -> Result<()> {
        let ok = self.tau2 > 0.0 && self.theta > 0.0 && self.g >= 0.0;
        let finite = self.tau2.is_finite() && self.theta.is_finite() && self.g.is_finite();
        if ok && finite {
            Ok(())
        } else {
            Err(GpError::InvalidHyper(format!("{self:?}")))
        }
    }
}

/// Squared-exponential correlation between two (normalized) inputs.
pub fn correlation(xi: [f64; 2], xj: [f64; 2], theta: f64) -> f64 {
    let d2 = (xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2);
    (-d2 / theta).exp()
}

/// Covariance between two inputs. The nugget enters only when both refer to
/// the same training run.
pub fn kernel(xi: [f64; 2], xj: [f64; 2], hyper: &GPHyperparams, same_index: bool) -> f64 {
    let nugget = if same_index { hyper.g } else { 0.0 };
    hyper.tau2 * (correlation(xi, xj, hyper.theta) + nugget)
}

/// Jitter added to the collapsed correlation diagonal when Cholesky fails.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Responses grouped by identical inputs.
#[derive(Debug, Clone)]
struct Collapsed {
    inputs: Vec<[f64; 2]>,
    counts: Vec<usize>,
    means: DVector<f64>,
    within_ss: f64,
    runs: usize,
}

impl Collapsed {
    fn new(x: &[[f64; 2]], y: &[f64]) -> Self {
        let mut index: HashMap<[u64; 2], usize> = HashMap::new();
        let mut inputs = Vec::new();
        let mut members: Vec<Vec<f64>> = Vec::new();
        for (xi, &yi) in x.iter().zip(y) {
            let key = [xi[0].to_bits(), xi[1].to_bits()];
            let slot = *index.entry(key).or_insert_with(|| {
                inputs.push(*xi);
                members.push(Vec::new());
                inputs.len() - 1
            });
            members[slot].push(yi);
        }
        let counts: Vec<usize> = members.iter().map(Vec::len).collect();
        let means: Vec<f64> = members
            .iter()
            .map(|m| m.iter().sum::<f64>() / m.len() as f64)
            .collect();
        let within_ss = members
            .iter()
            .zip(&means)
            .map(|(m, mu)| m.iter().map(|v| (v - mu).powi(2)).sum::<f64>())
            .sum();
        Collapsed {
            inputs,
            counts,
            means: DVector::from_vec(means),
            within_ss,
            runs: x.len(),
        }
    }

    fn has_replicates(&self) -> bool {
        self.runs > self.inputs.len()
    }
}

struct Factor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

fn factor(c: &Collapsed, theta: f64, g: f64) -> Result<Factor> {
    let b = c.inputs.len();
    let mut m = DMatrix::from_fn(b, b, |i, j| correlation(c.inputs[i], c.inputs[j], theta));
    for i in 0..b {
        m[(i, i)] += g / c.counts[i] as f64;
    }
    for &jitter in &JITTER_LADDER {
        let mut mj = m.clone();
        for i in 0..b {
            mj[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(mj) {
            return Ok(Factor { chol, jitter });
        }
    }
    Err(GpError::Singular(*JITTER_LADDER.last().unwrap()))
}

struct Profile {
    loglik: f64,
    tau2: f64,
    factor: Factor,
}

fn profile(c: &Collapsed, theta: f64, g: f64) -> Result<Profile> {
    if !(theta > 0.0 && g >= 0.0) {
        return Err(GpError::InvalidHyper(format!("theta={theta}, g={g}")));
    }
    if g == 0.0 && c.has_replicates() {
        return Err(GpError::Singular(0.0));
    }
    let factor = factor(c, theta, g)?;
    let r = c.runs as f64;
    let solved = factor.chol.solve(&c.means);
    let within = if c.has_replicates() { c.within_ss / g } else { 0.0 };
    let quad = within + c.means.dot(&solved);
    let tau2 = quad / r;
    if !(tau2.is_finite()) {
        return Err(GpError::NonFinite("profiled scale"));
    }
    if tau2 <= f64::MIN_POSITIVE {
        return Err(GpError::Degenerate);
    }
    let l = factor.chol.l_dirty();
    let logdet_m: f64 = 2.0 * (0..c.inputs.len()).map(|i| l[(i, i)].ln()).sum::<f64>();
    let replicate_terms: f64 = if c.has_replicates() {
        (c.runs - c.inputs.len()) as f64 * g.ln()
            + c.counts.iter().map(|&a| (a as f64).ln()).sum::<f64>()
    } else {
        0.0
    };
    let logdet_k = logdet_m + replicate_terms;
    let loglik = -0.5 * r * tau2.ln() - 0.5 * logdet_k;
    Ok(Profile { loglik, tau2, factor })
}

/// Concentrated log-likelihood `-(r/2) log τ̂² - ½ log|K|` and the profiled
/// scale `τ̂² = yᵀK⁻¹y / r`. `x` should be normalized and `y` centered.
pub fn log_likelihood(x: &[[f64; 2]], y: &[f64], theta: f64, g: f64) -> Result<(f64, f64)> {
    validate(x, y, 2)?;
    let p = profile(&Collapsed::new(x, y), theta, g)?;
    Ok((p.loglik, p.tau2))
}

fn validate(x: &[[f64; 2]], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(GpError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < min {
        return Err(GpError::TooFewRuns { min, got: x.len() });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GpError::NonFinite("inputs"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GpError::NonFinite("responses"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Per-dimension upper bounds used to scale inputs into `[0, 1]`.
    pub bounds: [f64; 2],
    pub starts: usize,
    pub theta_range: (f64, f64),
    pub g_range: (f64, f64),
    pub max_evals: usize,
}

impl FitOptions {
    pub fn new(bounds: [f64; 2]) -> Self {
        FitOptions {
            bounds,
            starts: 5,
            theta_range: (1e-3, 10.0),
            g_range: (1e-8, 1.0),
            max_evals: 300,
        }
    }
}

/// One multi-start trajectory, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestartRecord {
    pub start_theta: f64,
    pub start_g: f64,
    pub start_loglik: f64,
    pub theta: f64,
    pub g: f64,
    pub loglik: f64,
    pub evals: usize,
}

/// Radical-inverse (Halton) point `i` in bases 2 and 3.
fn halton(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut v = 0.0;
    i += 1;
    while i > 0 {
        f /= base as f64;
        v += f * (i % base) as f64;
        i /= base;
    }
    v
}

/// Fixed space-filling starting points over `(log θ, log g)`.
pub fn start_points(opts: &FitOptions) -> Vec<(f64, f64)> {
    let (lt0, lt1) = (opts.theta_range.0.ln(), opts.theta_range.1.ln());
    let (lg0, lg1) = (opts.g_range.0.ln(), opts.g_range.1.ln());
    (0..opts.starts.max(1))
        .map(|i| {
            let u = halton(i, 2);
            let v = halton(i, 3);
            ((lt0 + u * (lt1 - lt0)).exp(), (lg0 + v * (lg1 - lg0)).exp())
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PredictiveDistribution {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

/// A fitted surrogate. Immutable; safe to share across threads.
#[derive(Debug, Clone)]
pub struct GPFit {
    x_norm: Vec<[f64; 2]>,
    y_centered: Vec<f64>,
    offset: f64,
    bounds: [f64; 2],
    hyper: GPHyperparams,
    loglik: f64,
    collapsed: Collapsed,
    chol: DMatrix<f64>,
    jitter: f64,
    alpha: DVector<f64>,
    restarts: Vec<RestartRecord>,
}

fn normalize(x: &[[f64; 2]], bounds: [f64; 2]) -> Vec<[f64; 2]> {
    x.iter().map(|p| [p[0] / bounds[0], p[1] / bounds[1]]).collect()
}

fn check_bounds(bounds: [f64; 2]) -> Result<()> {
    if bounds.iter().all(|b| b.is_finite() && *b > 0.0) {
        Ok(())
    } else {
        Err(GpError::InvalidBounds(bounds))
    }
}

fn center(y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let scale = mean.abs().max(1.0);
    if y.len() > 1 && centered.iter().all(|v| v.abs() <= 1e-12 * scale) {
        return Err(GpError::Degenerate);
    }
    Ok((centered, mean))
}

impl GPFit {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        x_norm: Vec<[f64; 2]>,
        y_centered: Vec<f64>,
        offset: f64,
        bounds: [f64; 2],
        theta: f64,
        g: f64,
        tau2: Option<f64>,
        restarts: Vec<RestartRecord>,
    ) -> Result<GPFit> {
        let collapsed = Collapsed::new(&x_norm, &y_centered);
        let (hyper, loglik, factor) = match tau2 {
            Some(tau2) => {
                let f = factor(&collapsed, theta, g)?;
                let h = GPHyperparams { tau2, theta, g };
                h.check()?;
                (h, f64::NAN, f)
            }
            None => {
                let p = profile(&collapsed, theta, g)?;
                (GPHyperparams { tau2: p.tau2, theta, g }, p.loglik, p.factor)
            }
        };
        let alpha = factor.chol.solve(&collapsed.means);
        Ok(GPFit {
            x_norm,
            y_centered,
            offset,
            bounds,
            hyper,
            loglik,
            chol: factor.chol.l(),
            jitter: factor.jitter,
            alpha,
            collapsed,
            restarts,
        })
    }

    /// Conditions on data with fixed `θ` and `g`; τ² is profiled.
    pub fn with_params(x: &[[f64; 2]], y: &[f64], bounds: [f64; 2], theta: f64, g: f64) -> Result<GPFit> {
        validate(x, y, 2)?;
        check_bounds(bounds)?;
        let (yc, offset) = center(y)?;
        Self::assemble(normalize(x, bounds), yc, offset, bounds, theta, g, None, Vec::new())
    }

    /// Conditions on data with every hyperparameter fixed.
    pub fn with_hyperparams(x: &[[f64; 2]], y: &[f64], bounds: [f64; 2], hyper: GPHyperparams) -> Result<GPFit> {
        validate(x, y, 1)?;
        check_bounds(bounds)?;
        hyper.check()?;
        let offset = y.iter().sum::<f64>() / y.len() as f64;
        let yc = y.iter().map(|v| v - offset).collect();
        Self::assemble(
            normalize(x, bounds),
            yc,
            offset,
            bounds,
            hyper.theta,
            hyper.g,
            Some(hyper.tau2),
            Vec::new(),
        )
    }

    pub fn hyper(&self) -> GPHyperparams {
        self.hyper
    }

    /// Concentrated log-likelihood at the fitted parameters (NaN when τ² was
    /// fixed rather than profiled).
    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    /// Fitted observation noise variance `τ² g`.
    pub fn noise_variance(&self) -> f64 {
        self.hyper.tau2 * self.hyper.g
    }

    pub fn restarts(&self) -> &[RestartRecord] {
        &self.restarts
    }

    pub fn bounds(&self) -> [f64; 2] {
        self.bounds
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn normalized_inputs(&self) -> &[[f64; 2]] {
        &self.x_norm
    }

    pub fn centered_responses(&self) -> &[f64] {
        &self.y_centered
    }

    pub fn unique_inputs(&self) -> usize {
        self.collapsed.inputs.len()
    }

    /// Lower Cholesky factor of the covariance over the unique inputs,
    /// `τ² (C + diag(g / a_i))`. Equals the factor of `Σ(X)` when no input
    /// is replicated.
    pub fn covariance_factor(&self) -> DMatrix<f64> {
        &self.chol * self.hyper.tau2.sqrt()
    }

    /// `τ² (C + diag(g / a_i) + jitter·I)`, the matrix `covariance_factor` factors.
    pub fn collapsed_covariance(&self) -> DMatrix<f64> {
        let c = &self.collapsed;
        let b = c.inputs.len();
        DMatrix::from_fn(b, b, |i, j| {
            let mut v = correlation(c.inputs[i], c.inputs[j], self.hyper.theta);
            if i == j {
                v += self.hyper.g / c.counts[i] as f64 + self.jitter;
            }
            self.hyper.tau2 * v
        })
    }

    fn cross(&self, xnew: &[[f64; 2]]) -> Result<(Vec<[f64; 2]>, DMatrix<f64>)> {
        if xnew.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite("prediction inputs"));
        }
        let q = normalize(xnew, self.bounds);
        let u = &self.collapsed.inputs;
        let k = DMatrix::from_fn(q.len(), u.len(), |i, j| correlation(q[i], u[j], self.hyper.theta));
        Ok((q, k))
    }

    /// Predictive means only.
    pub fn predict_mean(&self, xnew: &[[f64; 2]]) -> Result<Vec<f64>> {
        let (_, k) = self.cross(xnew)?;
        Ok((k * &self.alpha).iter().map(|m| m + self.offset).collect())
    }

    /// Predictive means and marginal variances.
    pub fn predict_marginal(&self, xnew: &[[f64; 2]]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (_, k) = self.cross(xnew)?;
        let mean = (&k * &self.alpha).iter().map(|m| m + self.offset).collect();
        let v = self
            .chol
            .solve_lower_triangular(&k.transpose())
            .ok_or(GpError::Singular(self.jitter))?;
        let var = (0..k.nrows())
            .map(|i| {
                let s = 1.0 - v.column(i).norm_squared();
                (self.hyper.tau2 * s).max(0.0)
            })
            .collect();
        Ok((mean, var))
    }

    /// Full predictive distribution at `xnew` (in count units).
    pub fn predict(&self, xnew: &[[f64; 2]]) -> Result<PredictiveDistribution> {
        let (q, k) = self.cross(xnew)?;
        let mean = (&k * &self.alpha).iter().map(|m| m + self.offset).collect();
        let v = self
            .chol
            .solve_lower_triangular(&k.transpose())
            .ok_or(GpError::Singular(self.jitter))?;
        let n = q.len();
        let prior = DMatrix::from_fn(n, n, |i, j| correlation(q[i], q[j], self.hyper.theta));
        let mut cov = (prior - v.transpose() * &v) * self.hyper.tau2;
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
            if cov[(i, i)] < 0.0 && cov[(i, i)] >= -1e-8 * self.hyper.tau2.max(1.0) {
                cov[(i, i)] = 0.0;
            }
        }
        Ok(PredictiveDistribution { mean, cov })
    }
}

/// Maximum-likelihood fit from balance counts `x` and scores `y`.
pub fn fit_gp(x: &[[f64; 2]], y: &[f64], opts: &FitOptions) -> Result<GPFit> {
    validate(x, y, 3)?;
    check_bounds(opts.bounds)?;
    let (yc, offset) = center(y)?;
    let xn = normalize(x, opts.bounds);
    let collapsed = Collapsed::new(&xn, &yc);

    let lo = [opts.theta_range.0.ln(), opts.g_range.0.ln()];
    let hi = [opts.theta_range.1.ln(), opts.g_range.1.ln()];
    let step = [0.1 * (hi[0] - lo[0]), 0.1 * (hi[1] - lo[1])];
    let nm = NelderMeadOptions {
        max_evals: opts.max_evals,
        ..Default::default()
    };
    let objective = |p: &[f64]| match profile(&collapsed, p[0].exp(), p[1].exp()) {
        Ok(pr) => -pr.loglik,
        Err(_) => f64::INFINITY,
    };

    let restarts: Vec<RestartRecord> = start_points(opts)
        .into_par_iter()
        .map(|(theta0, g0)| {
            let x0 = [theta0.ln(), g0.ln()];
            let start = objective(&x0);
            let m = minimize(objective, &x0, &step, &lo, &hi, nm);
            RestartRecord {
                start_theta: theta0,
                start_g: g0,
                start_loglik: -start,
                theta: m.x[0].exp(),
                g: m.x[1].exp(),
                loglik: -m.value,
                evals: m.evals,
            }
        })
        .collect();

    let best = restarts
        .iter()
        .filter(|r| r.loglik.is_finite())
        .fold(None::<&RestartRecord>, |acc, r| match acc {
            Some(a) if a.loglik >= r.loglik => Some(a),
            _ => Some(r),
        });
    let Some(best) = best.copied() else {
        let diag = match profile(&collapsed, restarts[0].start_theta, restarts[0].start_g) {
            Err(e) => e.to_string(),
            Ok(_) => "likelihood not finite".into(),
        };
        return Err(GpError::AllStartsFailed(diag));
    };
    GPFit::assemble(xn, yc, offset, opts.bounds, best.theta, best.g, None, restarts)
}

pub const FIT_REPORT_HEADER: [&str; 10] = [
    "start",
    "start_theta",
    "start_g",
    "start_loglik",
    "theta",
    "g",
    "loglik",
    "evals",
    "selected",
    "tau2",
];

/// Restart table of a fit; `selected` marks the kept optimum, whose row
/// also carries the profiled scale.
pub fn write_fit_report<W: std::io::Write>(fit: &GPFit, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIT_REPORT_HEADER)?;
    let h = fit.hyper();
    for (i, r) in fit.restarts().iter().enumerate() {
        let selected = r.theta == h.theta && r.g == h.g;
        w.write_record([
            (i + 1).to_string(),
            r.start_theta.to_string(),
            r.start_g.to_string(),
            r.start_loglik.to_string(),
            r.theta.to_string(),
            r.g.to_string(),
            r.loglik.to_string(),
            r.evals.to_string(),
            u8::from(selected).to_string(),
            if selected { h.tau2.to_string() } else { String::new() },
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::oracle_mean;

    fn hyper() -> GPHyperparams {
        GPHyperparams { tau2: 2.0, theta: 0.3, g: 0.1 }
    }

    #[test]
    fn kernel_cases() {
        let h = hyper();
        let x = [0.2, 0.4];
        assert!((kernel(x, x, &h, true) - 2.0 * 1.1).abs() < 1e-15);
        let y = [0.2 + h.theta.sqrt(), 0.4];
        assert!((kernel(x, y, &h, false) - 2.0 * (-1.0f64).exp()).abs() < 1e-14);
        let far = [1e6, 1e6];
        assert_eq!(kernel(x, far, &h, false), 0.0);
        assert!((kernel(x, far, &h, true) - 2.0 * 0.1).abs() < 1e-15);
    }

    #[test]
    fn replicate_pair_likelihood_needs_nugget() {
        let x = [[0.5, 0.5], [0.5, 0.5]];
        let y = [0.1, -0.1];
        let (l_small, t_small) = log_likelihood(&x, &y, 0.5, 1e-6).unwrap();
        let (_, t_large) = log_likelihood(&x, &y, 0.5, 1e-2).unwrap();
        assert!(l_small.is_finite());
        assert!(t_small > t_large, "small nugget pushes replicate spread into τ²");
        assert!(log_likelihood(&x, &y, 0.5, 0.0).is_err());
    }

    #[test]
    fn zero_response_is_degenerate() {
        let x = [[0.1, 0.2], [0.3, 0.4], [0.9, 0.1]];
        assert_eq!(log_likelihood(&x, &[0.0; 3], 0.5, 1e-3), Err(GpError::Degenerate));
    }

    #[test]
    fn constant_response_fit_is_degenerate() {
        let x = [[1.0, 2.0], [3.0, 4.0], [5.0, 1.0], [2.0, 2.0]];
        let r = fit_gp(&x, &[0.7; 4], &FitOptions::new([10.0, 10.0]));
        assert_eq!(r.unwrap_err(), GpError::Degenerate);
    }

    #[test]
    fn fit_preconditions() {
        let opts = FitOptions::new([10.0, 10.0]);
        assert!(matches!(
            fit_gp(&[[1.0, 1.0], [2.0, 2.0]], &[0.1, 0.2], &opts),
            Err(GpError::TooFewRuns { .. })
        ));
        assert!(matches!(
            fit_gp(&[[1.0, 1.0], [2.0, 2.0], [3.0, 1.0]], &[0.1, f64::NAN, 0.2], &opts),
            Err(GpError::NonFinite(_))
        ));
    }

    #[test]
    fn single_point_shrinks_toward_mean() {
        let h = hyper();
        let fit = GPFit::with_hyperparams(&[[2.0, 3.0]], &[0.8], [10.0, 10.0], h).unwrap();
        let m = fit.predict_mean(&[[2.0, 3.0]]).unwrap()[0];
        // centered y is 0, so the prediction is the offset itself
        assert!((m - 0.8).abs() < 1e-15);

        // two mutually uncorrelated points: each behaves like a 1-point fit
        let x = [[0.0, 0.0], [1e4, 1e4]];
        let y = [0.9, 0.1];
        let fit = GPFit::with_hyperparams(&x, &y, [1.0, 1.0], h).unwrap();
        let m = fit.predict_mean(&[[0.0, 0.0]]).unwrap()[0];
        let expected = 0.5 + (0.9 - 0.5) / (1.0 + h.g);
        assert!((m - expected).abs() < 1e-12, "{m} vs {expected}");
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let x = [[1.0, 1.0], [2.0, 3.0], [4.0, 2.0]];
        let y = [0.2, 0.5, 0.4];
        let fit = GPFit::with_hyperparams(&x, &y, [5.0, 5.0], hyper()).unwrap();
        let p = fit.predict(&[[1e5, 1e5]]).unwrap();
        assert!((p.mean[0] - fit.offset()).abs() < 1e-12);
        assert!((p.cov[(0, 0)] - hyper().tau2).abs() < 1e-12);
    }

    #[test]
    fn factor_reconstructs_covariance() {
        let x = [[1.0, 2.0], [3.0, 1.0], [2.0, 2.0], [4.0, 4.0], [0.5, 3.0]];
        let y = [0.1, 0.4, 0.3, 0.9, 0.2];
        let fit = GPFit::with_params(&x, &y, [5.0, 5.0], 0.2, 1e-4).unwrap();
        let l = fit.covariance_factor();
        let rebuilt = &l * l.transpose();
        let h = fit.hyper();
        let xn = fit.normalized_inputs();
        for i in 0..5 {
            for j in 0..5 {
                let s = kernel(xn[i], xn[j], &h, i == j);
                assert!((rebuilt[(i, j)] - s).abs() <= 1e-8 * s.abs().max(1e-300) + 1e-14);
            }
        }
    }

    #[test]
    fn noiseless_surface_gets_tiny_nugget() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 1..=10 {
            for j in 1..=10 {
                let (a, b) = (i as f64 * 4.5, j as f64 * 4.5);
                x.push([a, b]);
                y.push(oracle_mean(a, b).unwrap());
            }
        }
        let fit = fit_gp(&x, &y, &FitOptions::new([45.0, 45.0])).unwrap();
        assert!(fit.hyper().g <= 1e-3, "g = {}", fit.hyper().g);
        for r in fit.restarts() {
            assert!(fit.loglik() >= r.start_loglik || !r.start_loglik.is_finite());
        }
    }

    #[test]
    fn interpolates_with_pinned_tiny_nugget() {
        let x: Vec<[f64; 2]> = (1..=6).flat_map(|i| (1..=6).map(move |j| [i as f64 * 7.0, j as f64 * 7.0])).collect();
        let y: Vec<f64> = x.iter().map(|p| oracle_mean(p[0], p[1]).unwrap()).collect();
        let fit = GPFit::with_params(&x, &y, [45.0, 45.0], 0.3, 1e-8).unwrap();
        let m = fit.predict_mean(&x).unwrap();
        let worst = m.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-4, "max abs error {worst}");
    }

    #[test]
    fn start_points_fill_the_box() {
        let opts = FitOptions::new([1.0, 1.0]);
        let s = start_points(&opts);
        assert_eq!(s.len(), 5);
        for (t, g) in &s {
            assert!((1e-3..=10.0).contains(t) && (1e-8..=1.0).contains(g));
        }
        let mut thetas: Vec<f64> = s.iter().map(|p| p.0).collect();
        thetas.sort_by(f64::total_cmp);
        thetas.dedup();
        assert_eq!(thetas.len(), 5);
    }
}
