//! Run configuration: one TOML file, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::{GoodDecision, Policy, RobustnessConfig, RunConfig, StartRule, SuitabilityConfig};
use crate::balance_experiment::{BalanceDesign, ExperimentOptions, TestComposition};
use crate::conic::DEFAULT_Q;
use crate::dataset::{self, CsvSchema, MetadataDataset, Proportion, SyntheticSpec};
use crate::learner::{ForestParams, LearnerSpec, PerformanceMetric, DEFAULT_ORACLE_NOISE_SD};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// CSV read through a schema file (or the round-trip layout).
    Csv,
    /// Raw UCI Spambase file with engineered special-character metadata.
    Spambase,
    /// Gaussian two-class data generated from the seed.
    Synthetic,
    /// Featureless points with category tags only; for the oracle learner.
    Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_per_category: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_a: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_b: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct P0Config {
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Oracle,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_leaf: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_subset_size: Option<usize>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            kind: LearnerKind::Forest,
            noise_sd: None,
            tree_count: None,
            max_depth: None,
            min_leaf: None,
            feature_subset_size: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default = "default_z")]
    pub z: usize,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default)]
    pub test_composition: TestComposition,
}

fn default_b() -> usize {
    100
}
fn default_z() -> usize {
    10
}
fn default_q() -> usize {
    DEFAULT_Q
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            b: default_b(),
            z: default_z(),
            q: default_q(),
            test_composition: TestComposition::Population,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default = "default_n_start")]
    pub n_start: usize,
    #[serde(default = "default_n_stop")]
    pub n_stop: usize,
    #[serde(default = "default_step")]
    pub step: usize,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    #[serde(default = "default_holdout")]
    pub holdout: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartRule>,
}

fn default_n_start() -> usize {
    100
}
fn default_n_stop() -> usize {
    500
}
fn default_step() -> usize {
    20
}
fn default_policy() -> Policy {
    Policy::Gpaml
}
fn default_holdout() -> usize {
    1000
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            n_start: default_n_start(),
            n_stop: default_n_stop(),
            step: default_step(),
            policy: default_policy(),
            holdout: default_holdout(),
            start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecideConfig {
    /// Current balance; defaults to the dataset's counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_a: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_b: Option<usize>,
    #[serde(default = "default_step")]
    pub n: usize,
    /// Also report predictive variances in `cone.csv`.
    #[serde(default = "default_true")]
    pub variance: bool,
}

fn default_true() -> bool {
    true
}

impl Default for DecideConfig {
    fn default() -> Self {
        DecideConfig {
            n_a: None,
            n_b: None,
            n: default_step(),
            variance: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuitabilityToml {
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_major")]
    pub major: usize,
    #[serde(default = "default_minor")]
    pub minor: usize,
    #[serde(default = "default_suitability_holdout")]
    pub holdout: usize,
}

fn default_reps() -> usize {
    100
}
fn default_major() -> usize {
    90
}
fn default_minor() -> usize {
    10
}
fn default_suitability_holdout() -> usize {
    500
}

impl Default for SuitabilityToml {
    fn default() -> Self {
        SuitabilityToml {
            reps: default_reps(),
            major: default_major(),
            minor: default_minor(),
            holdout: default_suitability_holdout(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessToml {
    #[serde(default = "default_b_total")]
    pub b_total: usize,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_step")]
    pub n: usize,
    #[serde(default = "default_good")]
    pub good: GoodDecision,
}

fn default_b_total() -> usize {
    250
}
fn default_sizes() -> Vec<usize> {
    vec![100, 150, 200]
}
fn default_good() -> GoodDecision {
    GoodDecision::MajorityB
}

impl Default for RobustnessToml {
    fn default() -> Self {
        RobustnessToml {
            b_total: default_b_total(),
            sizes: default_sizes(),
            reps: default_reps(),
            n: default_step(),
            good: default_good(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_metric")]
    pub metric: PerformanceMetric,
    pub dataset: DatasetConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<P0Config>,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub campaign: CampaignConfig,
    #[serde(default)]
    pub decide: DecideConfig,
    #[serde(default)]
    pub suitability: SuitabilityToml,
    #[serde(default)]
    pub robustness: RobustnessToml,
}

fn default_metric() -> PerformanceMetric {
    PerformanceMetric::Ccr
}

impl Config {
    /// Parses `text`; relative dataset paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Config, String> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        for p in [&mut cfg.dataset.path, &mut cfg.dataset.schema].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.materialize()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Fills every defaulted value and checks cross-field constraints.
    fn materialize(&mut self) -> Result<(), String> {
        let d = &mut self.dataset;
        let require = |ok: bool, what: &str| if ok { Ok(()) } else { Err(format!("dataset.kind = {:?} needs {what}", d.kind)) };
        match d.kind {
            DatasetKind::Csv | DatasetKind::Spambase => require(d.path.is_some(), "dataset.path")?,
            DatasetKind::Synthetic => {
                d.n_per_category.get_or_insert(500);
                let sep_a = *d.separation_a.get_or_insert(2.0);
                d.separation_b.get_or_insert(sep_a / 2.0);
            }
            DatasetKind::Counts => require(d.n_a.is_some() && d.n_b.is_some(), "dataset.n_a and dataset.n_b")?,
        }
        if let Some(p) = self.p0 {
            Proportion::from_a(p.a).map_err(|e| format!("p0.a: {e}"))?;
        }

        let l = &mut self.learner;
        match l.kind {
            LearnerKind::Oracle => {
                if l.tree_count.is_some() || l.max_depth.is_some() || l.min_leaf.is_some() || l.feature_subset_size.is_some() {
                    return Err("forest parameters given for learner.kind = \"oracle\"".into());
                }
                l.noise_sd.get_or_insert(DEFAULT_ORACLE_NOISE_SD);
            }
            LearnerKind::Forest => {
                if l.noise_sd.is_some() {
                    return Err("learner.noise_sd applies only to learner.kind = \"oracle\"".into());
                }
                let defaults = ForestParams::default();
                l.tree_count.get_or_insert(defaults.tree_count);
                l.min_leaf.get_or_insert(defaults.min_leaf);
            }
        }
        self.learner_spec().validate().map_err(|e| e.to_string())?;

        let c = &mut self.campaign;
        c.start.get_or_insert(StartRule::Fixed {
            n_a: c.n_start / 2,
            n_b: c.n_start - c.n_start / 2,
        });
        self.run_config(0).validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn learner_spec(&self) -> LearnerSpec {
        let l = &self.learner;
        match l.kind {
            LearnerKind::Oracle => LearnerSpec::Oracle {
                noise_sd: l.noise_sd.unwrap_or(DEFAULT_ORACLE_NOISE_SD),
            },
            LearnerKind::Forest => {
                let d = ForestParams::default();
                LearnerSpec::Forest(ForestParams {
                    tree_count: l.tree_count.unwrap_or(d.tree_count),
                    max_depth: l.max_depth,
                    min_leaf: l.min_leaf.unwrap_or(d.min_leaf),
                    feature_subset_size: l.feature_subset_size,
                })
            }
        }
    }

    pub fn design(&self) -> BalanceDesign {
        BalanceDesign {
            b: self.experiment.b,
            z: self.experiment.z,
            metric: self.metric,
        }
    }

    pub fn experiment_options(&self) -> ExperimentOptions {
        ExperimentOptions {
            keep_membership: false,
            test_composition: self.experiment.test_composition,
        }
    }

    pub fn run_config(&self, seed: u64) -> RunConfig {
        let c = &self.campaign;
        RunConfig {
            n_start: c.n_start,
            n_stop: c.n_stop,
            step: c.step,
            design: self.design(),
            q: self.experiment.q,
            holdout: c.holdout,
            start: c.start.unwrap_or(StartRule::Fixed {
                n_a: c.n_start / 2,
                n_b: c.n_start - c.n_start / 2,
            }),
            seed,
            experiment: self.experiment_options(),
        }
    }

    pub fn suitability_config(&self) -> SuitabilityConfig {
        let s = &self.suitability;
        SuitabilityConfig {
            reps: s.reps,
            major: s.major,
            minor: s.minor,
            holdout: s.holdout,
            metric: self.metric,
        }
    }

    pub fn robustness_config(&self) -> RobustnessConfig {
        let r = &self.robustness;
        RobustnessConfig {
            b_total: r.b_total,
            z: self.experiment.z,
            sizes: r.sizes.clone(),
            reps: r.reps,
            n: r.n,
            q: self.experiment.q,
            metric: self.metric,
            good: r.good,
        }
    }

    /// Builds the dataset described by the `dataset` and `p0` sections.
    pub fn load_dataset(&self) -> Result<MetadataDataset, dataset::DatasetError> {
        let d = &self.dataset;
        let ds = match d.kind {
            DatasetKind::Csv => {
                let path = d.path.as_deref().expect("checked when parsed");
                let schema = match &d.schema {
                    Some(s) => CsvSchema::from_toml_file(s)?,
                    None => CsvSchema::roundtrip(),
                };
                dataset::load_csv(path, &schema)?
            }
            DatasetKind::Spambase => {
                let path = d.path.as_deref().expect("checked when parsed");
                dataset::load_csv(path, &CsvSchema::spambase())?
            }
            DatasetKind::Synthetic => SyntheticSpec {
                n_per_category: d.n_per_category.unwrap_or(500),
                separation_a: d.separation_a.unwrap_or(2.0),
                separation_b: d.separation_b.unwrap_or(1.0),
            }
            .generate(&mut seed::rng_from(self.seed, &[seed::stream::DATASET]))?,
            DatasetKind::Counts => MetadataDataset::placeholder(d.n_a.unwrap_or(0), d.n_b.unwrap_or(0)),
        };
        Ok(match self.p0 {
            Some(p) => ds.with_p0(Proportion::from_a(p.a)?),
            None => ds,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config, String> {
        Config::parse(text, Path::new("/cfg"))
    }

    #[test]
    fn minimal_oracle_config_materializes() {
        let cfg = parse(
            r#"
            seed = 3
            dataset.kind = "counts"
            dataset.n_a = 50
            dataset.n_b = 50
            learner.kind = "oracle"
            experiment.b = 2
            experiment.z = 2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.learner_spec(), LearnerSpec::Oracle { noise_sd: 0.05 });
        assert_eq!(cfg.campaign.start, Some(StartRule::Fixed { n_a: 50, n_b: 50 }));
        let again = parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse("dataset.kind = \"counts\"\ndataset.n_a = 1\ndataset.n_b = 1\nexperiment.bb = 3\n").unwrap_err();
        assert!(err.contains("bb"), "{err}");
        assert!(err.contains("line 4"), "{err}");
    }

    #[test]
    fn cross_field_errors() {
        assert!(parse("dataset.kind = \"csv\"\n").is_err());
        assert!(parse("dataset.kind = \"counts\"\ndataset.n_a = 5\ndataset.n_b = 5\nlearner.kind = \"oracle\"\nlearner.tree_count = 3\n").is_err());
        assert!(parse("dataset.kind = \"counts\"\ndataset.n_a = 5\ndataset.n_b = 5\ncampaign.n_stop = 50\n").is_err());
        assert!(parse("dataset.kind = \"counts\"\ndataset.n_a = 5\ndataset.n_b = 5\np0.a = 1.5\n").is_err());
        assert!(parse("dataset.kind = \"counts\"\ndataset.n_a = 5\ndataset.n_b = 5\ncampaign.policy = \"greedy\"\n").is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let cfg = parse("dataset.kind = \"spambase\"\ndataset.path = \"spambase.data\"\n").unwrap();
        assert_eq!(cfg.dataset.path.unwrap(), PathBuf::from("/cfg/spambase.data"));
    }
}
