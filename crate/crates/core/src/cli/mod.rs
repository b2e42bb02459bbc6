//! Command-line front end.
//!
//! Every command reads one TOML config, writes its CSV outputs plus
//! `resolved.toml`, `summary.txt` and `manifest.json` into `--out`, and
//! exits 0 on success, 1 on a runtime failure, 2 on a configuration error.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::acquisition::{self, AcquisitionError};
use crate::balance_experiment::{self, ExperimentData, ExperimentError};
use crate::conic::{self, ConicError, StepOptions};
use crate::dataset::Category;
use crate::gp::{self, FitOptions};
pub use config::Config;

#[derive(Debug, Parser)]
#[command(name = "gpaml", version, about = "GP-assisted metadata-balance acquisition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the blocked balance experiment; writes observations.csv.
    BalanceExperiment(Common),
    /// Fit the surrogate to observations and choose the next batch split.
    Decide {
        #[command(flatten)]
        common: Common,
        /// observations.csv from a balance experiment.
        #[arg(long)]
        observations: PathBuf,
    },
    /// Multi-step acquisition campaign; writes trace.csv.
    Campaign(Common),
    /// Majority-category training comparison; writes suitability.csv.
    Suitability(Common),
    /// Decision stability under block subsampling; writes robustness.csv.
    Robustness(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::BalanceExperiment(c) | Command::Campaign(c) | Command::Suitability(c) | Command::Robustness(c) => c,
            Command::Decide { common, .. } => common,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

/// Collects output files in write order for the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    fn csv<F, E>(&mut self, name: &str, f: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), E>,
        E: std::error::Error + Send + Sync + 'static,
    {
        let mut buf = Vec::new();
        f(&mut buf).with_context(|| format!("serializing {name}"))?;
        self.write(name, buf)
    }
}

#[derive(Serialize)]
struct FileDigest<'a> {
    file: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a Config,
    outputs: Vec<FileDigest<'a>>,
}

fn finish(mut out: Outputs, command: &str, cfg: &Config, summary: String) -> anyhow::Result<()> {
    out.write("resolved.toml", cfg.to_toml().into_bytes())?;
    out.write("summary.txt", summary.into_bytes())?;
    let outputs = out
        .files
        .iter()
        .map(|(name, bytes)| FileDigest {
            file: name,
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        })
        .collect();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        config: cfg,
        outputs,
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    let path = out.dir.join("manifest.json");
    fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Classifies module errors that stem from the configuration rather than
/// from running it.
fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<AcquisitionError>(),
            Some(AcquisitionError::Config(_))
        ) || matches!(
            c.downcast_ref::<ExperimentError>(),
            Some(ExperimentError::InvalidDesign { .. } | ExperimentError::Schema(_))
        ) || matches!(c.downcast_ref::<ConicError>(), Some(ConicError::InvalidArgs(_)))
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    let mut cfg = Config::load(&common.config).map_err(CliError::Config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let body = || -> anyhow::Result<()> {
        let out = Outputs::new(&common.out)?;
        match &cli.command {
            Command::BalanceExperiment(_) => balance(&cfg, out),
            Command::Decide { observations, .. } => decide(&cfg, observations, out),
            Command::Campaign(_) => campaign(&cfg, out),
            Command::Suitability(_) => suitability(&cfg, out),
            Command::Robustness(_) => robustness(&cfg, out),
        }
    };
    let result = match common.jobs {
        Some(0) => return Err(CliError::Config("--jobs must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.into()))?
            .install(body),
        None => body(),
    };
    result.map_err(|e| if is_config_error(&e) { CliError::Config(format!("{e:#}")) } else { CliError::Runtime(e) })
}

fn balance(cfg: &Config, mut out: Outputs) -> anyhow::Result<()> {
    let ds = cfg.load_dataset().context("loading dataset")?;
    let data = balance_experiment::run_balance_experiment(
        &ds,
        &cfg.learner_spec(),
        &cfg.design(),
        cfg.seed,
        cfg.experiment_options(),
    )?;
    out.csv("observations.csv", |w| data.write_csv(w))?;
    let invalid = data.rows.iter().filter(|r| !r.valid).count();
    let mut s = String::new();
    writeln!(s, "balance experiment")?;
    writeln!(s, "dataset: N = {} (N_A = {}, N_B = {}), p0_A = {}", ds.len(), ds.n_a(), ds.n_b(), ds.p0().a)?;
    writeln!(s, "bounds: B_A = {}, B_B = {}", data.bounds[0], data.bounds[1])?;
    writeln!(s, "runs: {} ({} blocks x {} replicates), invalid: {invalid}", data.rows.len(), cfg.experiment.b, cfg.experiment.z)?;
    finish(out, "balance-experiment", cfg, s)
}

fn decide(cfg: &Config, observations: &Path, mut out: Outputs) -> anyhow::Result<()> {
    let ds = cfg.load_dataset().context("loading dataset")?;
    let bounds = balance_experiment::sampling_bounds_for(&ds, cfg.experiment.test_composition)?;
    let file = fs::File::open(observations).with_context(|| format!("opening {}", observations.display()))?;
    let data = ExperimentData::read_csv(file, bounds).with_context(|| format!("reading {}", observations.display()))?;
    let n_a = cfg.decide.n_a.unwrap_or(ds.n_a());
    let n_b = cfg.decide.n_b.unwrap_or(ds.n_b());
    let opts = StepOptions {
        q: cfg.experiment.q,
        fit: Some(FitOptions::new(data.bounds_f64())),
        with_variance: cfg.decide.variance,
    };
    let d = conic::gpaml_step(&data, n_a, n_b, cfg.decide.n, opts)?;
    out.csv("decision.csv", |w| conic::write_decision_csv(&d, w))?;
    out.csv("choice.csv", |w| conic::write_choice_csv(&d, w))?;
    out.csv("cone.csv", |w| conic::write_cone_csv(&d, w))?;
    let fit = d.fit.as_ref().expect("gpaml_step keeps its fit");
    out.csv("gp_fit.csv", |w| gp::write_fit_report(fit, w))?;

    let h = fit.hyper();
    let mut s = String::new();
    writeln!(s, "acquisition decision")?;
    writeln!(s, "current balance: ({n_a}, {n_b}), batch n = {}", cfg.decide.n)?;
    writeln!(s, "observations: {} valid rows, {} distinct balances", data.x().len(), fit.unique_inputs())?;
    writeln!(s, "gp: tau2 = {}, theta = {}, g = {}, noise variance = {}", h.tau2, h.theta, h.g, fit.noise_variance())?;
    writeln!(s, "cone: q = {}, scales [{}, {}]", d.fan.q(), d.fan.scales[0], d.fan.scales[d.fan.q() - 1])?;
    writeln!(
        s,
        "chosen: n_A = {}, n_B = {} (row {}, G = {})",
        d.chosen.0,
        d.chosen.1,
        d.argmax + 1,
        d.g[d.argmax]
    )?;
    finish(out, "decide", cfg, s)
}

fn campaign(cfg: &Config, mut out: Outputs) -> anyhow::Result<()> {
    let ds = cfg.load_dataset().context("loading dataset")?;
    let policy = cfg.campaign.policy;
    let trace = acquisition::run_campaign(&ds, &cfg.learner_spec(), policy, &cfg.run_config(cfg.seed))?;
    out.csv("trace.csv", |w| acquisition::write_trace_csv(&trace, w))?;
    let last = trace.last();
    let mut s = String::new();
    writeln!(s, "campaign ({policy})")?;
    writeln!(s, "steps recorded: {}", trace.rows.len() - 1)?;
    writeln!(
        s,
        "final: N = {}, N_A = {}, N_B = {}, prop_A = {}, oos score = {}",
        last.n,
        last.n_a_total,
        last.n_b_total,
        last.prop_a(),
        last.oos_score
    )?;
    match &trace.termination {
        Some(reason) => writeln!(s, "stopped early: {reason}")?,
        None => writeln!(s, "completed")?,
    }
    finish(out, "campaign", cfg, s)
}

fn suitability(cfg: &Config, mut out: Outputs) -> anyhow::Result<()> {
    let ds = cfg.load_dataset().context("loading dataset")?;
    let report = acquisition::metadata_suitability_check(&ds, &cfg.learner_spec(), &cfg.suitability_config(), cfg.seed)?;
    out.csv("suitability.csv", |w| acquisition::write_suitability_csv(&report, w))?;
    let mut s = String::new();
    writeln!(s, "metadata suitability ({} reps per category)", cfg.suitability.reps)?;
    writeln!(s, "mean score, A majority: {}", report.mean(Category::A))?;
    writeln!(s, "mean score, B majority: {}", report.mean(Category::B))?;
    writeln!(s, "difference (A - B): {} (se {})", report.mean_difference(), report.difference_se())?;
    finish(out, "suitability", cfg, s)
}

fn robustness(cfg: &Config, mut out: Outputs) -> anyhow::Result<()> {
    let ds = cfg.load_dataset().context("loading dataset")?;
    let report = acquisition::subsample_robustness_study(&ds, &cfg.learner_spec(), &cfg.robustness_config(), cfg.seed)?;
    out.csv("robustness.csv", |w| acquisition::write_robustness_csv(&report, w))?;
    let mut s = String::new();
    writeln!(s, "subsample robustness (b_total = {})", cfg.robustness.b_total)?;
    for m in &report.summaries {
        writeln!(
            s,
            "size {}: good fraction {}, mean n_A {}, var n_A {}",
            m.size, m.good_fraction, m.mean_n_a, m.var_n_a
        )?;
    }
    finish(out, "robustness", cfg, s)
}

/// Entry point for the binary; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
