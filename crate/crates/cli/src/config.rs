//! Flat key-value experiment configuration.
//!
//! One `key = value` pair per line, `#` starts a comment. Unknown keys are
//! rejected so typos fail loudly. See the repository README for the full key
//! reference.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use selmix::model::{Arch, EarlyStopMetric, ModelSpec, TrainConfig};
use selmix::synth::{SpuriousCorrConfig, TemporalShiftConfig};
use selmix::SamplingStrategy64;

/// Where the experiment's data comes from.
#[derive(Debug, Clone)]
pub enum DatasetSource {
    Temporal(TemporalShiftConfig<f64>),
    Spurious(SpuriousCorrConfig<f64>),
    Csv {
        path: PathBuf,
        num_classes: Option<usize>,
        num_domains: Option<usize>,
    },
}

/// Which summary metric the bar-chart export uses.
#[allow(clippy::enum_variant_names)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarMetric {
    TestAccuracy,
    TestWorstGroupAccuracy,
    TestWorstDomainAccuracy,
    TestAuroc,
}

impl BarMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            BarMetric::TestAccuracy => "test_accuracy",
            BarMetric::TestWorstGroupAccuracy => "test_worst_group_accuracy",
            BarMetric::TestWorstDomainAccuracy => "test_worst_domain_accuracy",
            BarMetric::TestAuroc => "test_auroc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "test_accuracy" => Ok(Self::TestAccuracy),
            "test_worst_group_accuracy" => Ok(Self::TestWorstGroupAccuracy),
            "test_worst_domain_accuracy" => Ok(Self::TestWorstDomainAccuracy),
            "test_auroc" => Ok(Self::TestAuroc),
            other => bail!("unknown metric `{other}`"),
        }
    }
}

/// Post-run analysis toggles.
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub sampled_distribution: bool,
    pub sampled_distribution_draws: usize,
    pub divergence_scatter: bool,
    pub covariate_divergence: bool,
    pub covariate_sample: usize,
    pub uniformity_report: bool,
    pub bar_metric: BarMetric,
    pub save_models: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            sampled_distribution: true,
            sampled_distribution_draws: 100_000,
            divergence_scatter: true,
            covariate_divergence: false,
            covariate_sample: 1000,
            uniformity_report: true,
            bar_metric: BarMetric::TestAccuracy,
            save_models: false,
        }
    }
}

/// A fully parsed experiment definition.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Canonical strategy strings; `resample:target=test` is resolved per
    /// run against the test split's class distribution.
    pub strategies: Vec<String>,
    pub seeds: Vec<u64>,
    pub model_arch: Arch,
    pub model_init_scale: f64,
    pub train: TrainConfig<f64>,
    pub out_dir: Option<PathBuf>,
    pub analysis: AnalysisConfig,
}

impl ExperimentConfig {
    /// Model spec for a given input dimension and run seed.
    pub fn model_spec(&self, input_dim: usize, num_classes: usize, seed: u64) -> ModelSpec<f64> {
        ModelSpec {
            arch: self.model_arch,
            input_dim,
            num_classes,
            init_scale: self.model_init_scale,
            seed,
        }
    }
}

struct KeyValues {
    values: BTreeMap<String, String>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl KeyValues {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.split_once('#') {
                Some((head, _)) => head.trim(),
                None => raw.trim(),
            };
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{raw}`", i + 1))?;
            let key = key.trim().to_string();
            if values
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                bail!("line {}: duplicate key `{key}`", i + 1);
            }
        }
        Ok(Self {
            values,
            used: Default::default(),
        })
    }

    fn get(&self, key: &str) -> Option<&str> {
        let v = self.values.get(key).map(String::as_str);
        if v.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        v
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| anyhow!("missing key `{key}`"))
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow!("key `{key}`: {e}")),
        }
    }

    fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.values
            .keys()
            .filter(|k| !used.contains(*k))
            .cloned()
            .collect()
    }
}

fn parse_range(raw: &str) -> Result<Range<usize>> {
    let (start, end) = raw
        .split_once("..")
        .ok_or_else(|| anyhow!("expected `start..end`, got `{raw}`"))?;
    Ok(start.trim().parse()?..end.trim().parse()?)
}

fn parse_seeds(raw: &str) -> Result<Vec<u64>> {
    if let Some((start, end)) = raw.split_once("..") {
        let start: u64 = start.trim().parse()?;
        let end: u64 = end.trim().parse()?;
        if end <= start {
            bail!("empty seed range `{raw}`");
        }
        return Ok((start..end).collect());
    }
    raw.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(Into::into))
        .collect()
}

fn parse_float_list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(Into::into))
        .collect()
}

fn parse_bool(raw: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => bail!("expected boolean, got `{other}`"),
    }
}

fn parse_dataset(kv: &KeyValues, base_dir: &Path) -> Result<DatasetSource> {
    match kv.require("dataset.kind")? {
        "temporal" => {
            let defaults = TemporalShiftConfig::<f64>::default();
            let num_domains = kv
                .parse_as::<usize>("temporal.num_domains")?
                .unwrap_or(defaults.num_domains);
            let schedule = match kv.get("temporal.schedule") {
                Some(raw) => parse_float_list(raw)?,
                None => defaults.class_ratio_schedule.clone(),
            };
            let config = TemporalShiftConfig {
                num_domains,
                train_domains: match kv.get("temporal.train_domains") {
                    Some(raw) => parse_range(raw)?,
                    None => defaults.train_domains.clone(),
                },
                test_domains: match kv.get("temporal.test_domains") {
                    Some(raw) => parse_range(raw)?,
                    None => defaults.test_domains.clone(),
                },
                class_ratio_schedule: schedule,
                covariate_drift_rate: kv
                    .parse_as("temporal.covariate_drift_rate")?
                    .unwrap_or(defaults.covariate_drift_rate),
                n_per_domain: kv
                    .parse_as("temporal.n_per_domain")?
                    .unwrap_or(defaults.n_per_domain),
                num_classes: kv
                    .parse_as("temporal.num_classes")?
                    .unwrap_or(defaults.num_classes),
                core_signal: kv
                    .parse_as("temporal.core_signal")?
                    .unwrap_or(defaults.core_signal),
                noise_dim: kv
                    .parse_as("temporal.noise_dim")?
                    .unwrap_or(defaults.noise_dim),
                val_fraction: kv
                    .parse_as("temporal.val_fraction")?
                    .unwrap_or(defaults.val_fraction),
                seed: kv.parse_as("temporal.seed")?.unwrap_or(defaults.seed),
            };
            config.validate().map_err(|e| anyhow!("{e}"))?;
            Ok(DatasetSource::Temporal(config))
        }
        "spurious" => {
            let defaults = SpuriousCorrConfig::<f64>::default();
            let config = SpuriousCorrConfig {
                n_train: kv.parse_as("spurious.n_train")?.unwrap_or(defaults.n_train),
                n_val: kv.parse_as("spurious.n_val")?.unwrap_or(defaults.n_val),
                n_test: kv.parse_as("spurious.n_test")?.unwrap_or(defaults.n_test),
                class_balance_train: kv
                    .parse_as("spurious.class_balance_train")?
                    .unwrap_or(defaults.class_balance_train),
                spurious_strength_train: kv
                    .parse_as("spurious.strength_train")?
                    .unwrap_or(defaults.spurious_strength_train),
                spurious_strength_test: kv
                    .parse_as("spurious.strength_test")?
                    .unwrap_or(defaults.spurious_strength_test),
                core_signal: kv
                    .parse_as("spurious.core_signal")?
                    .unwrap_or(defaults.core_signal),
                spurious_signal: kv
                    .parse_as("spurious.spurious_signal")?
                    .unwrap_or(defaults.spurious_signal),
                noise_dim: kv
                    .parse_as("spurious.noise_dim")?
                    .unwrap_or(defaults.noise_dim),
                seed: kv.parse_as("spurious.seed")?.unwrap_or(defaults.seed),
            };
            config.validate().map_err(|e| anyhow!("{e}"))?;
            Ok(DatasetSource::Spurious(config))
        }
        "csv" => {
            let raw = kv.require("dataset.path")?;
            let mut path = PathBuf::from(raw);
            if path.is_relative() {
                path = base_dir.join(path);
            }
            Ok(DatasetSource::Csv {
                path,
                num_classes: kv.parse_as("dataset.num_classes")?,
                num_domains: kv.parse_as("dataset.num_domains")?,
            })
        }
        other => bail!("unknown dataset.kind `{other}`"),
    }
}

/// Parse and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    let kv = KeyValues::parse(&text)?;

    let dataset = parse_dataset(&kv, base_dir)?;

    let strategies: Vec<String> = kv
        .require("strategies")?
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if strategies.is_empty() {
        bail!("`strategies` must name at least one strategy");
    }
    for name in &strategies {
        if name != "resample:target=test" {
            SamplingStrategy64::parse(name).map_err(|e| anyhow!("strategy `{name}`: {e}"))?;
        }
    }

    let seeds = parse_seeds(kv.require("seeds")?)?;
    if seeds.is_empty() {
        bail!("`seeds` must name at least one seed");
    }

    let model_arch = match kv.get("model.arch").unwrap_or("linear") {
        "linear" => Arch::Linear,
        "mlp" => Arch::Mlp {
            hidden_units: kv.parse_as("model.hidden_units")?.unwrap_or(16),
        },
        other => bail!("unknown model.arch `{other}`"),
    };
    let model_init_scale = kv.parse_as("model.init_scale")?.unwrap_or(0.1);

    let train_defaults = TrainConfig::<f64>::default();
    let train = TrainConfig {
        learning_rate: kv
            .parse_as("train.learning_rate")?
            .unwrap_or(train_defaults.learning_rate),
        batch_size: kv
            .parse_as("train.batch_size")?
            .unwrap_or(train_defaults.batch_size),
        max_epochs: kv
            .parse_as("train.max_epochs")?
            .unwrap_or(train_defaults.max_epochs),
        steps_per_epoch: kv
            .parse_as("train.steps_per_epoch")?
            .unwrap_or(train_defaults.steps_per_epoch),
        early_stop_metric: match kv.get("train.early_stop_metric") {
            Some(raw) => EarlyStopMetric::parse(raw).map_err(|e| anyhow!("{e}"))?,
            None => train_defaults.early_stop_metric,
        },
        momentum: kv.parse_as("train.momentum")?.unwrap_or(0.0),
        weight_decay: kv.parse_as("train.weight_decay")?.unwrap_or(0.0),
        seed: 0, // derived per run
    };
    train.validate().map_err(|e| anyhow!("{e}"))?;

    let out_dir = kv.get("out_dir").map(|raw| {
        let p = PathBuf::from(raw);
        if p.is_relative() {
            base_dir.join(p)
        } else {
            p
        }
    });

    let defaults = AnalysisConfig::default();
    let analysis = AnalysisConfig {
        sampled_distribution: match kv.get("analysis.sampled_distribution") {
            Some(raw) => parse_bool(raw)?,
            None => defaults.sampled_distribution,
        },
        sampled_distribution_draws: kv
            .parse_as("analysis.sampled_distribution_draws")?
            .unwrap_or(defaults.sampled_distribution_draws),
        divergence_scatter: match kv.get("analysis.divergence_scatter") {
            Some(raw) => parse_bool(raw)?,
            None => defaults.divergence_scatter,
        },
        covariate_divergence: match kv.get("analysis.covariate_divergence") {
            Some(raw) => parse_bool(raw)?,
            None => defaults.covariate_divergence,
        },
        covariate_sample: kv
            .parse_as("analysis.covariate_sample")?
            .unwrap_or(defaults.covariate_sample),
        uniformity_report: match kv.get("analysis.uniformity_report") {
            Some(raw) => parse_bool(raw)?,
            None => defaults.uniformity_report,
        },
        bar_metric: match kv.get("analysis.bar_metric") {
            Some(raw) => BarMetric::parse(raw)?,
            None => defaults.bar_metric,
        },
        save_models: match kv.get("analysis.save_models") {
            Some(raw) => parse_bool(raw)?,
            None => defaults.save_models,
        },
    };

    let unused = kv.unused();
    if !unused.is_empty() {
        bail!("unknown config keys: {}", unused.join(", "));
    }

    Ok(ExperimentConfig {
        dataset,
        strategies,
        seeds,
        model_arch,
        model_init_scale,
        train,
        out_dir,
        analysis,
    })
}
