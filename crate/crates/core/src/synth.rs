//! Parameterized generators for distribution-shift benchmarks.
//!
//! Two regimes: a spurious-correlation setup whose class/domain association
//! reverses between train and test, and a temporal label-shift setup whose
//! per-period class balance follows a schedule (optionally with covariate
//! drift). Both emit ground-truth metadata sufficient to recompute every
//! configured quantity from the CSV alone.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Example, Split};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordered key-value metadata with a line-based text serialization.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = Metadata::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("metadata line {} has no `=`: `{line}`", i + 1))
            })?;
            meta.push(key.trim(), value.trim());
        }
        Ok(meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

impl fmt::Display for Metadata {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Generated splits plus the ground-truth metadata.
#[derive(Debug, Clone)]
pub struct SynthBundle<T> {
    pub train: Dataset<T>,
    pub val: Dataset<T>,
    pub test: Dataset<T>,
    pub metadata: Metadata,
}

// ---------------------------------------------------------------------------
// Spurious correlation (class/domain association reversed at test time)
// ---------------------------------------------------------------------------

/// Binary classes and domains; feature 0 is aligned with the class, feature 1
/// with the domain, followed by `noise_dim` pure-noise dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpuriousCorrConfig<T> {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Fraction of class 0 (the majority class) in every split.
    pub class_balance_train: T,
    /// Probability that the domain agrees with the class in train/val.
    pub spurious_strength_train: T,
    /// Same at test time; below 0.5 reverses the association.
    pub spurious_strength_test: T,
    /// Separation of the class-aligned feature, in feature std units.
    pub core_signal: T,
    /// Separation of the domain-aligned feature.
    pub spurious_signal: T,
    pub noise_dim: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for SpuriousCorrConfig<T> {
    fn default() -> Self {
        Self {
            n_train: 4000,
            n_val: 1000,
            n_test: 2000,
            class_balance_train: T::cast(0.77),
            spurious_strength_train: T::cast(0.95),
            spurious_strength_test: T::cast(0.05),
            core_signal: T::cast(2.0),
            spurious_signal: T::cast(3.0),
            noise_dim: 8,
            seed: 0,
        }
    }
}

impl<T: Scalar> SpuriousCorrConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = |v: T| v > T::zero() && v < T::one();
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::InvalidConfig("split sizes must be >= 1".into()));
        }
        if !frac_ok(self.class_balance_train)
            || !frac_ok(self.spurious_strength_train)
            || !frac_ok(self.spurious_strength_test)
        {
            return Err(Error::InvalidConfig(
                "class balance and spurious strengths must lie in (0, 1)".into(),
            ));
        }
        if self.core_signal < T::zero() || self.spurious_signal < T::zero() {
            return Err(Error::InvalidConfig("signals must be >= 0".into()));
        }
        Ok(())
    }
}

fn spurious_split<T: Scalar>(
    config: &SpuriousCorrConfig<T>,
    n: usize,
    strength: T,
    split: Split,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset<T>> {
    let half = T::cast(0.5);
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let class =
            usize::from(rng.random_range(T::zero()..T::one()) >= config.class_balance_train);
        let agree = rng.random_range(T::zero()..T::one()) < strength;
        let domain = if agree { class } else { 1 - class };
        let class_sign = if class == 0 { -half } else { half };
        let domain_sign = if domain == 0 { -half } else { half };
        let mut features = Vec::with_capacity(2 + config.noise_dim);
        let noise: T = T::standard_normal(rng);
        features.push(class_sign * config.core_signal + noise);
        let noise: T = T::standard_normal(rng);
        features.push(domain_sign * config.spurious_signal + noise);
        for _ in 0..config.noise_dim {
            features.push(T::standard_normal(rng));
        }
        examples.push(Example::new(features, class, domain));
    }
    let data = Dataset::new(examples, 2, 2, split)?;
    for class in 0..2 {
        for domain in 0..2 {
            if data.group_counts()[class * 2 + domain] == 0 {
                return Err(Error::GroupStarved {
                    class,
                    domain,
                    split: split.as_str().into(),
                });
            }
        }
    }
    Ok(data)
}

fn push_group_counts(meta: &mut Metadata, prefix: &str, data: &Dataset<impl Scalar>) {
    let counts: Vec<String> = data.group_counts().iter().map(|c| c.to_string()).collect();
    meta.push(format!("{prefix}.n"), data.len());
    meta.push(format!("{prefix}.group_counts"), counts.join(","));
}

/// Generate the spurious-correlation benchmark.
///
/// Train and validation share the training association strength; the test
/// split uses `spurious_strength_test`. Group counts are recorded in
/// metadata in row-major order (class0/domain0, class0/domain1, ...).
pub fn gen_spurious_correlation<T: Scalar>(
    config: &SpuriousCorrConfig<T>,
) -> Result<SynthBundle<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train = spurious_split(
        config,
        config.n_train,
        config.spurious_strength_train,
        Split::Train,
        &mut rng,
    )?;
    let val = spurious_split(
        config,
        config.n_val,
        config.spurious_strength_train,
        Split::Validation,
        &mut rng,
    )?;
    let test = spurious_split(
        config,
        config.n_test,
        config.spurious_strength_test,
        Split::Test,
        &mut rng,
    )?;

    let mut metadata = Metadata::default();
    metadata.push("generator", "spurious_correlation");
    metadata.push("seed", config.seed);
    metadata.push("num_classes", 2);
    metadata.push("num_domains", 2);
    metadata.push("feature_dim", 2 + config.noise_dim);
    metadata.push("class_balance_train", config.class_balance_train);
    metadata.push("spurious_strength_train", config.spurious_strength_train);
    metadata.push("spurious_strength_test", config.spurious_strength_test);
    metadata.push("core_signal", config.core_signal);
    metadata.push("spurious_signal", config.spurious_signal);
    metadata.push("noise_dim", config.noise_dim);
    metadata.push("feature.core_dim", 0);
    metadata.push("feature.spurious_dim", 1);
    metadata.push(
        "group_order",
        "class0/domain0,class0/domain1,class1/domain0,class1/domain1",
    );
    push_group_counts(&mut metadata, "train", &train);
    push_group_counts(&mut metadata, "val", &val);
    push_group_counts(&mut metadata, "test", &test);

    Ok(SynthBundle {
        train,
        val,
        test,
        metadata,
    })
}

// ---------------------------------------------------------------------------
// Temporal label shift (per-period class balance schedule)
// ---------------------------------------------------------------------------

/// Domains are time periods; `class_ratio_schedule[d]` is the class-0
/// fraction in period `d`. A schedule drifting toward 0.5 across the
/// train-to-test boundary models a regression toward uniformity; a schedule
/// drifting away reverses it. Feature 0 separates the classes; all features
/// shift by `covariate_drift_rate * domain` to model covariate drift.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalShiftConfig<T> {
    pub num_domains: usize,
    pub train_domains: Range<usize>,
    pub test_domains: Range<usize>,
    pub class_ratio_schedule: Vec<T>,
    pub covariate_drift_rate: T,
    pub n_per_domain: usize,
    pub num_classes: usize,
    pub core_signal: T,
    pub noise_dim: usize,
    /// Fraction of each training period held out for validation.
    pub val_fraction: T,
    pub seed: u64,
}

impl<T: Scalar> Default for TemporalShiftConfig<T> {
    fn default() -> Self {
        Self {
            num_domains: 10,
            train_domains: 0..6,
            test_domains: 6..10,
            class_ratio_schedule: [0.88, 0.85, 0.82, 0.79, 0.76, 0.73, 0.70, 0.67, 0.64, 0.61]
                .iter()
                .map(|&v| T::cast(v))
                .collect(),
            covariate_drift_rate: T::zero(),
            n_per_domain: 800,
            num_classes: 2,
            core_signal: T::cast(2.0),
            noise_dim: 4,
            val_fraction: T::cast(0.2),
            seed: 0,
        }
    }
}

impl<T: Scalar> TemporalShiftConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.num_domains == 0 || self.n_per_domain == 0 {
            return Err(Error::InvalidConfig(
                "num_domains and n_per_domain must be >= 1".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("num_classes must be >= 2".into()));
        }
        if self.class_ratio_schedule.len() != self.num_domains {
            return Err(Error::InvalidConfig(format!(
                "schedule has {} entries for {} domains",
                self.class_ratio_schedule.len(),
                self.num_domains
            )));
        }
        if self
            .class_ratio_schedule
            .iter()
            .any(|&m| !(m > T::zero() && m < T::one()))
        {
            return Err(Error::InvalidConfig(
                "schedule entries must lie in (0, 1)".into(),
            ));
        }
        if self.train_domains.end > self.num_domains || self.test_domains.end > self.num_domains {
            return Err(Error::InvalidConfig(
                "domain ranges exceed num_domains".into(),
            ));
        }
        let overlap = self.train_domains.start < self.test_domains.end
            && self.test_domains.start < self.train_domains.end;
        if overlap && !self.train_domains.is_empty() && !self.test_domains.is_empty() {
            return Err(Error::InvalidConfig(
                "train and test domain ranges must be disjoint".into(),
            ));
        }
        let covered = self.train_domains.len() + self.test_domains.len();
        if covered != self.num_domains {
            return Err(Error::InvalidConfig(
                "train and test ranges must cover every domain exactly once".into(),
            ));
        }
        let vf = self.val_fraction;
        if vf.is_nan() || vf < T::zero() || vf >= T::one() {
            return Err(Error::InvalidConfig(
                "val_fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Generate the temporal label-shift benchmark.
pub fn gen_temporal_label_shift<T: Scalar>(
    config: &TemporalShiftConfig<T>,
) -> Result<SynthBundle<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let c_n = config.num_classes;
    let offset = T::from_count(c_n - 1) / T::cast(2.0);

    let mut train_examples = Vec::new();
    let mut val_examples = Vec::new();
    let mut test_examples = Vec::new();
    let mut per_domain_class_counts = vec![vec![0usize; c_n]; config.num_domains];

    for domain in 0..config.num_domains {
        let majority = config.class_ratio_schedule[domain];
        let drift = config.covariate_drift_rate * T::from_count(domain);
        let in_train = config.train_domains.contains(&domain);
        for _ in 0..config.n_per_domain {
            let u = rng.random_range(T::zero()..T::one());
            let class = if u < majority {
                0
            } else if c_n == 2 {
                1
            } else {
                // Remaining mass split evenly across classes 1..C.
                let slot = (u - majority) / (T::one() - majority) * T::from_count(c_n - 1);
                (slot.to_usize().unwrap_or(0) + 1).min(c_n - 1)
            };
            per_domain_class_counts[domain][class] += 1;
            let class_pos = (T::from_count(class) - offset) * config.core_signal;
            let mut features = Vec::with_capacity(1 + config.noise_dim);
            let noise: T = T::standard_normal(&mut rng);
            features.push(class_pos + noise + drift);
            for _ in 0..config.noise_dim {
                let noise: T = T::standard_normal(&mut rng);
                features.push(noise + drift);
            }
            let example = Example::new(features, class, domain);
            if in_train {
                let to_val = rng.random_range(T::zero()..T::one()) < config.val_fraction;
                if to_val {
                    val_examples.push(example);
                } else {
                    train_examples.push(example);
                }
            } else {
                test_examples.push(example);
            }
        }
    }

    let build = |examples: Vec<Example<T>>, split: Split, which: &str| {
        if examples.is_empty() {
            return Err(Error::InvalidConfig(format!("{which} split is empty")));
        }
        Dataset::new(examples, c_n, config.num_domains, split)
    };
    let train = build(train_examples, Split::Train, "train")?;
    let val = build(val_examples, Split::Validation, "validation")?;
    let test = build(test_examples, Split::Test, "test")?;

    let mut metadata = Metadata::default();
    metadata.push("generator", "temporal_label_shift");
    metadata.push("seed", config.seed);
    metadata.push("num_classes", c_n);
    metadata.push("num_domains", config.num_domains);
    metadata.push("feature_dim", 1 + config.noise_dim);
    metadata.push(
        "train_domains",
        format!(
            "{}..{}",
            config.train_domains.start, config.train_domains.end
        ),
    );
    metadata.push(
        "test_domains",
        format!("{}..{}", config.test_domains.start, config.test_domains.end),
    );
    let schedule: Vec<String> = config
        .class_ratio_schedule
        .iter()
        .map(|v| format!("{v}"))
        .collect();
    metadata.push("class_ratio_schedule", schedule.join(","));
    metadata.push("covariate_drift_rate", config.covariate_drift_rate);
    metadata.push("n_per_domain", config.n_per_domain);
    metadata.push("core_signal", config.core_signal);
    metadata.push("noise_dim", config.noise_dim);
    metadata.push("val_fraction", config.val_fraction);
    for (domain, counts) in per_domain_class_counts.iter().enumerate() {
        let joined: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
        metadata.push(format!("domain.{domain}.class_counts"), joined.join(","));
    }
    metadata.push("train.n", train.len());
    metadata.push("val.n", val.len());
    metadata.push("test.n", test.len());

    Ok(SynthBundle {
        train,
        val,
        test,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::empirical_group_distribution;
    use crate::metrics::uniformity_shift_report;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn spurious_group_proportions_match_product() {
        let config = SpuriousCorrConfig::<f64>::default();
        let bundle = gen_spurious_correlation(&config).unwrap();
        let groups = empirical_group_distribution(&bundle.train).unwrap();
        // (majority aligned, majority misaligned, minority misaligned,
        //  minority aligned) under row-major order.
        let expected = [0.77 * 0.95, 0.77 * 0.05, 0.23 * 0.05, 0.23 * 0.95];
        for (got, want) in groups.iter().zip(expected) {
            assert!((got - want).abs() < 0.02, "{got} vs {want}");
        }
    }

    #[test]
    fn spurious_half_strength_is_independent() {
        let config = SpuriousCorrConfig::<f64> {
            spurious_strength_train: 0.5,
            spurious_strength_test: 0.5,
            seed: 3,
            ..SpuriousCorrConfig::default()
        };
        let bundle = gen_spurious_correlation(&config).unwrap();
        // Chi-squared independence test on the 2x2 class/domain table.
        let counts = bundle.train.group_counts();
        let n = bundle.train.len() as f64;
        let row: Vec<f64> = (0..2)
            .map(|c| (counts[c * 2] + counts[c * 2 + 1]) as f64)
            .collect();
        let col: Vec<f64> = (0..2).map(|d| (counts[d] + counts[2 + d]) as f64).collect();
        let mut statistic = 0.0;
        for c in 0..2 {
            for d in 0..2 {
                let expected = row[c] * col[d] / n;
                let observed = counts[c * 2 + d] as f64;
                statistic += (observed - expected).powi(2) / expected;
            }
        }
        let critical = ChiSquared::new(1.0).unwrap().inverse_cdf(0.99);
        assert!(
            statistic < critical,
            "chi-squared {statistic} >= {critical}"
        );
    }

    #[test]
    fn spurious_generator_is_deterministic() {
        let config = SpuriousCorrConfig::<f64> {
            seed: 9,
            ..SpuriousCorrConfig::default()
        };
        let a = gen_spurious_correlation(&config).unwrap();
        let b = gen_spurious_correlation(&config).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.metadata, b.metadata);
    }

    #[test]
    fn spurious_starved_group_errors() {
        let config = SpuriousCorrConfig::<f64> {
            n_train: 30,
            n_val: 30,
            n_test: 30,
            class_balance_train: 0.99,
            spurious_strength_train: 0.99,
            seed: 1,
            ..SpuriousCorrConfig::default()
        };
        let err = gen_spurious_correlation(&config).unwrap_err();
        assert!(matches!(err, Error::GroupStarved { .. }), "{err:?}");
    }

    #[test]
    fn spurious_realized_matches_config_within_3_sigma() {
        for seed in 0..5u64 {
            let config = SpuriousCorrConfig::<f64> {
                seed,
                ..SpuriousCorrConfig::default()
            };
            let bundle = gen_spurious_correlation(&config).unwrap();
            for (data, strength) in [(&bundle.train, 0.95), (&bundle.test, 0.05)] {
                let n = data.len() as f64;
                let class0 = data.class_counts()[0] as f64 / n;
                let sigma = (0.77f64 * 0.23 / n).sqrt();
                assert!((class0 - 0.77).abs() < 3.0 * sigma + 1e-9, "{class0}");
                let aligned = data
                    .examples()
                    .iter()
                    .filter(|e| e.class_index == e.domain_index)
                    .count() as f64
                    / n;
                let sigma = (strength * (1.0 - strength) / n).sqrt();
                assert!(
                    (aligned - strength).abs() < 4.0 * sigma + 1e-9,
                    "aligned {aligned} vs {strength}"
                );
            }
        }
    }

    #[test]
    fn temporal_schedule_realized_within_3_sigma() {
        let config = TemporalShiftConfig::<f64>::default();
        let bundle = gen_temporal_label_shift(&config).unwrap();
        let n = config.n_per_domain as f64;
        for domain in 0..config.num_domains {
            let m = config.class_ratio_schedule[domain];
            let realized: f64 = bundle
                .metadata
                .get(&format!("domain.{domain}.class_counts"))
                .unwrap()
                .split(',')
                .next()
                .unwrap()
                .parse::<f64>()
                .unwrap()
                / n;
            let sigma = (m * (1.0 - m) / n).sqrt();
            assert!(
                (realized - m).abs() < 3.5 * sigma,
                "domain {domain}: {realized} vs {m}"
            );
        }
    }

    #[test]
    fn temporal_minority_ratio_monotone_under_monotone_schedule() {
        let config = TemporalShiftConfig::<f64> {
            num_domains: 7,
            train_domains: 0..4,
            test_domains: 4..7,
            class_ratio_schedule: vec![0.85, 0.80, 0.75, 0.70, 0.65, 0.60, 0.55],
            n_per_domain: 3000,
            seed: 5,
            ..TemporalShiftConfig::default()
        };
        let bundle = gen_temporal_label_shift(&config).unwrap();
        let combined = concat_all(&bundle);
        let report = uniformity_shift_report(&combined).unwrap();
        assert_eq!(report.len(), 7);
        let ratios: Vec<f64> = report
            .iter()
            .map(|r| r.minority_class_ratio.unwrap())
            .collect();
        for pair in ratios.windows(2) {
            assert!(
                pair[1] > pair[0],
                "minority ratios not increasing: {ratios:?}"
            );
        }
    }

    #[test]
    fn temporal_reversed_schedule_lowers_test_entropy() {
        let config = TemporalShiftConfig::<f64> {
            class_ratio_schedule: vec![0.61, 0.64, 0.67, 0.70, 0.73, 0.76, 0.79, 0.82, 0.85, 0.88],
            seed: 6,
            ..TemporalShiftConfig::default()
        };
        let bundle = gen_temporal_label_shift(&config).unwrap();
        let combined = concat_all(&bundle);
        let report = uniformity_shift_report(&combined).unwrap();
        let mean = |domains: &Range<usize>| {
            let entries: Vec<f64> = report
                .iter()
                .filter(|r| domains.contains(&r.domain))
                .map(|r| r.class_entropy)
                .collect();
            entries.iter().sum::<f64>() / entries.len() as f64
        };
        assert!(mean(&config.test_domains) < mean(&config.train_domains));
    }

    #[test]
    fn temporal_no_drift_matches_holdout_nn_divergence() {
        use crate::metrics::nn_covariate_divergence;
        let config = TemporalShiftConfig::<f64> {
            num_domains: 2,
            train_domains: 0..1,
            test_domains: 1..2,
            class_ratio_schedule: vec![0.7, 0.7],
            covariate_drift_rate: 0.0,
            n_per_domain: 1400,
            val_fraction: 0.1,
            seed: 7,
            ..TemporalShiftConfig::default()
        };
        let bundle = gen_temporal_label_shift(&config).unwrap();
        // Equal-size reference and query sets, all i.i.d.
        let train = bundle.train.examples();
        let half = train.len() / 2;
        let a = Dataset::new(train[..half].to_vec(), 2, 2, Split::Train).unwrap();
        let b = Dataset::new(train[half..2 * half].to_vec(), 2, 2, Split::Test).unwrap();
        let test_half =
            Dataset::new(bundle.test.examples()[..half].to_vec(), 2, 2, Split::Test).unwrap();
        let within = nn_covariate_divergence(&a, &b).unwrap();
        let across = nn_covariate_divergence(&a, &test_half).unwrap();
        let rel = (across - within).abs() / within;
        assert!(rel < 0.1, "within {within} vs across {across}");
    }

    #[test]
    fn temporal_drift_increases_divergence() {
        use crate::metrics::nn_covariate_divergence;
        let base = TemporalShiftConfig::<f64> {
            num_domains: 4,
            train_domains: 0..2,
            test_domains: 2..4,
            class_ratio_schedule: vec![0.7; 4],
            n_per_domain: 500,
            seed: 8,
            ..TemporalShiftConfig::default()
        };
        let drifted = TemporalShiftConfig::<f64> {
            covariate_drift_rate: 1.0,
            ..base.clone()
        };
        let flat_bundle = gen_temporal_label_shift(&base).unwrap();
        let drift_bundle = gen_temporal_label_shift(&drifted).unwrap();
        let flat = nn_covariate_divergence(&flat_bundle.train, &flat_bundle.test).unwrap();
        let moved = nn_covariate_divergence(&drift_bundle.train, &drift_bundle.test).unwrap();
        assert!(moved > flat * 1.3, "{moved} vs {flat}");
    }

    #[test]
    fn temporal_multiclass_generates_all_classes() {
        let config = TemporalShiftConfig::<f64> {
            num_classes: 4,
            class_ratio_schedule: vec![0.4; 10],
            seed: 11,
            ..TemporalShiftConfig::default()
        };
        let bundle = gen_temporal_label_shift(&config).unwrap();
        assert_eq!(bundle.train.num_classes(), 4);
        for c in 0..4 {
            assert!(bundle.train.class_counts()[c] > 0, "class {c} empty");
        }
        // Classes 1..4 share the non-majority mass roughly evenly.
        let counts = bundle.train.class_counts();
        let minor: Vec<f64> = (1..4).map(|c| counts[c] as f64).collect();
        let mean = minor.iter().sum::<f64>() / 3.0;
        for v in minor {
            assert!((v - mean).abs() / mean < 0.25, "{v} vs {mean}");
        }
    }

    #[test]
    fn temporal_validation_errors() {
        let bad_schedule = TemporalShiftConfig::<f64> {
            class_ratio_schedule: vec![0.7; 9],
            ..TemporalShiftConfig::default()
        };
        assert!(gen_temporal_label_shift(&bad_schedule).is_err());
        let overlapping = TemporalShiftConfig::<f64> {
            train_domains: 0..6,
            test_domains: 5..10,
            ..TemporalShiftConfig::default()
        };
        assert!(gen_temporal_label_shift(&overlapping).is_err());
    }

    #[test]
    fn metadata_roundtrip() {
        let config = TemporalShiftConfig::<f64> {
            n_per_domain: 50,
            seed: 12,
            ..TemporalShiftConfig::default()
        };
        let bundle = gen_temporal_label_shift(&config).unwrap();
        let parsed = Metadata::parse(&bundle.metadata.to_string()).unwrap();
        assert_eq!(parsed, bundle.metadata);
    }

    #[test]
    fn metadata_recomputable_from_csv() {
        // The emitted CSV plus metadata is self-describing: realized counts
        // recorded in metadata match a reload of the CSV.
        use crate::io::{load_dataset_csv, write_datasets_csv, CsvSchema};
        let config = SpuriousCorrConfig::<f64> {
            n_train: 300,
            n_val: 100,
            n_test: 150,
            seed: 21,
            ..SpuriousCorrConfig::default()
        };
        let bundle = gen_spurious_correlation(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("data.csv");
        write_datasets_csv(&[&bundle.train, &bundle.val, &bundle.test], &csv_path).unwrap();

        let schema = CsvSchema {
            num_classes: Some(2),
            num_domains: Some(2),
            ..CsvSchema::default()
        }
        .with_split_filter(Split::Train);
        let train: Dataset<f64> = load_dataset_csv(&csv_path, &schema).unwrap();
        assert_eq!(train, bundle.train);
        let recorded: Vec<usize> = bundle
            .metadata
            .get("train.group_counts")
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(recorded, train.group_counts());
    }

    fn concat_all(bundle: &SynthBundle<f64>) -> Dataset<f64> {
        let mut examples = bundle.train.examples().to_vec();
        examples.extend_from_slice(bundle.val.examples());
        examples.extend_from_slice(bundle.test.examples());
        Dataset::new(
            examples,
            bundle.train.num_classes(),
            bundle.train.num_domains(),
            Split::Train,
        )
        .unwrap()
    }

    #[test]
    fn spurious_no_signal_equalizes_groups() {
        // With no spurious feature the domain carries no signal, so an
        // ERM-trained linear model scores both domains of a class alike.
        use crate::model::{train, Arch, ModelSpec, TrainConfig};
        use crate::strategies::SamplingStrategy;
        let config = SpuriousCorrConfig::<f64> {
            spurious_signal: 0.0,
            core_signal: 3.0,
            n_train: 3000,
            n_val: 800,
            n_test: 4000,
            seed: 17,
            ..SpuriousCorrConfig::default()
        };
        let bundle = gen_spurious_correlation(&config).unwrap();
        let spec = ModelSpec {
            arch: Arch::Linear,
            input_dim: bundle.train.feature_dim(),
            num_classes: 2,
            init_scale: 0.1,
            seed: 2,
        };
        let train_config = TrainConfig {
            learning_rate: 0.5,
            max_epochs: 25,
            steps_per_epoch: 20,
            ..TrainConfig::default()
        };
        let trained = train(
            &bundle.train,
            &bundle.val,
            &SamplingStrategy::Erm,
            &spec,
            &train_config,
        )
        .unwrap();
        let report = crate::metrics::evaluate(&trained.model, &bundle.test).unwrap();
        for class in 0..2 {
            let accs: Vec<f64> = report
                .per_group
                .iter()
                .filter(|g| g.class == class)
                .map(|g| g.accuracy)
                .collect();
            assert_eq!(accs.len(), 2);
            assert!(
                (accs[0] - accs[1]).abs() < 0.08,
                "class {class} group accuracies {accs:?}"
            );
        }
    }
}
