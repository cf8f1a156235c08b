//! Experiment grid execution and result-file writing.
//!
//! Every (strategy, seed) cell trains one model and evaluates it on all
//! splits. Cells run in parallel; all files are written by a single thread
//! in a deterministic order, so identical configs produce byte-identical
//! results. A failing cell is recorded in `failures.csv` and the rest of the
//! grid continues.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use selmix::data::{empirical_class_distribution, ClassDistribution, Dataset, Example, Split};
use selmix::io::{load_dataset_csv, CsvSchema};
use selmix::metrics::{
    distribution_divergence, evaluate, nn_covariate_divergence, pearson_correlation,
    uniformity_shift_report, DivergenceKind, REPORT_CSV_HEADER,
};
use selmix::model::{save_model, train, TrainConfig};
use selmix::pairing::build_pair_pool;
use selmix::strategies::{
    build_minibatch, effective_sampled_distribution, BatchItem, ResampleAxis,
};
use selmix::synth::{gen_spurious_correlation, gen_temporal_label_shift};
use selmix::{Dataset64, SamplingStrategy64};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DatasetSource, ExperimentConfig};

/// Train/val/test triplet for one run.
pub struct Bundle {
    pub train: Dataset64,
    pub val: Dataset64,
    pub test: Dataset64,
}

impl Bundle {
    fn concat_all(&self) -> Result<Dataset64> {
        let mut examples: Vec<Example<f64>> = self.train.examples().to_vec();
        examples.extend_from_slice(self.val.examples());
        examples.extend_from_slice(self.test.examples());
        Dataset::new(
            examples,
            self.train.num_classes(),
            self.train.num_domains(),
            Split::Train,
        )
        .map_err(|e| anyhow!("{e}"))
    }
}

/// Materialize the dataset for one run seed. Generator sources derive their
/// seed as `base seed + run seed`; CSV sources are identical across runs.
pub fn make_bundle(source: &DatasetSource, run_seed: u64) -> Result<Bundle> {
    match source {
        DatasetSource::Temporal(config) => {
            let mut config = config.clone();
            config.seed = config.seed.wrapping_add(run_seed);
            let bundle = gen_temporal_label_shift(&config)?;
            Ok(Bundle {
                train: bundle.train,
                val: bundle.val,
                test: bundle.test,
            })
        }
        DatasetSource::Spurious(config) => {
            let mut config = config.clone();
            config.seed = config.seed.wrapping_add(run_seed);
            let bundle = gen_spurious_correlation(&config)?;
            Ok(Bundle {
                train: bundle.train,
                val: bundle.val,
                test: bundle.test,
            })
        }
        DatasetSource::Csv {
            path,
            num_classes,
            num_domains,
        } => {
            let probe: Dataset64 = load_dataset_csv(path, &CsvSchema::default())
                .with_context(|| format!("loading {}", path.display()))?;
            let num_classes = num_classes.unwrap_or_else(|| probe.num_classes());
            let num_domains = num_domains.unwrap_or_else(|| probe.num_domains());
            let load = |split: Split| -> Result<Dataset64> {
                let schema = CsvSchema {
                    num_classes: Some(num_classes),
                    num_domains: Some(num_domains),
                    ..CsvSchema::default()
                }
                .with_split_filter(split);
                load_dataset_csv(path, &schema).with_context(|| {
                    format!("loading split `{}` from {}", split.as_str(), path.display())
                })
            };
            Ok(Bundle {
                train: load(Split::Train)?,
                val: load(Split::Validation)?,
                test: load(Split::Test)?,
            })
        }
    }
}

/// Resolve a configured strategy string against a concrete bundle
/// (`resample:target=test` becomes a target-distribution resampler).
pub fn resolve_strategy(name: &str, bundle: &Bundle) -> Result<SamplingStrategy64> {
    if name == "resample:target=test" {
        let target = empirical_class_distribution(&bundle.test)?;
        return Ok(SamplingStrategy64::Resample(ResampleAxis::Target(target)));
    }
    SamplingStrategy64::parse(name).map_err(|e| anyhow!("{e}"))
}

fn derived_train_seed(run_seed: u64) -> u64 {
    run_seed ^ 0x9E37_79B9_7F4A_7C15
}

struct CellMetrics {
    test_accuracy: f64,
    test_worst_group_accuracy: f64,
    test_worst_domain_accuracy: f64,
    test_auroc: Option<f64>,
    val_accuracy: f64,
    per_domain_test_accuracy: Vec<(usize, f64)>,
}

struct CellOutcome {
    runs_rows: Vec<String>,
    training_row: String,
    metrics: CellMetrics,
    model: Option<(String, selmix::Model64)>,
}

struct CellFailure {
    strategy: String,
    seed: u64,
    stage: &'static str,
    error: String,
}

fn run_cell(
    config: &ExperimentConfig,
    strategy_name: &str,
    seed: u64,
) -> std::result::Result<CellOutcome, CellFailure> {
    let fail = |stage: &'static str, error: String| CellFailure {
        strategy: strategy_name.to_string(),
        seed,
        stage,
        error,
    };
    let bundle = make_bundle(&config.dataset, seed).map_err(|e| fail("dataset", e.to_string()))?;
    let strategy =
        resolve_strategy(strategy_name, &bundle).map_err(|e| fail("strategy", e.to_string()))?;
    let spec = config.model_spec(bundle.train.feature_dim(), bundle.train.num_classes(), seed);
    let train_config = TrainConfig {
        seed: derived_train_seed(seed),
        ..config.train.clone()
    };
    let trained = train(&bundle.train, &bundle.val, &strategy, &spec, &train_config)
        .map_err(|e| fail("train", e.to_string()))?;

    let mut runs_rows = Vec::new();
    let mut eval_split = |data: &Dataset64, split: &str| {
        let report = evaluate(&trained.model, data).map_err(|e| fail("evaluate", e.to_string()))?;
        runs_rows.extend(report.to_csv_rows(strategy_name, seed, split));
        Ok(report)
    };
    eval_split(&bundle.train, "train")?;
    let val_report = eval_split(&bundle.val, "val")?;
    let test_report = eval_split(&bundle.test, "test")?;

    let best = &trained.history[trained.best_epoch];
    let training_row = format!(
        "{strategy_name},{seed},{},{},{}",
        trained.best_epoch, best.train_loss, best.val_accuracy
    );

    let model = config.analysis.save_models.then(|| {
        let sanitized: String = strategy_name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        (
            format!("{sanitized}__seed{seed}.txt"),
            trained.model.clone(),
        )
    });

    Ok(CellOutcome {
        runs_rows,
        training_row,
        metrics: CellMetrics {
            test_accuracy: test_report.overall_accuracy,
            test_worst_group_accuracy: test_report.worst_group_accuracy,
            test_worst_domain_accuracy: test_report.worst_domain_accuracy,
            test_auroc: test_report.overall_auroc,
            val_accuracy: val_report.overall_accuracy,
            per_domain_test_accuracy: test_report
                .per_domain
                .iter()
                .map(|d| (d.domain, d.accuracy))
                .collect(),
        },
        model,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn write_lines(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out =
        String::with_capacity(header.len() + rows.iter().map(|r| r.len() + 1).sum::<usize>() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn format_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Sampled class distribution of a strategy on the analysis bundle.
fn strategy_sampled_class(
    bundle: &Bundle,
    strategy_name: &str,
    draws: usize,
) -> Result<ClassDistribution<f64>> {
    let strategy = resolve_strategy(strategy_name, bundle)?;
    let pool = build_pair_pool(&bundle.train);
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11A);
    let dist = effective_sampled_distribution(&bundle.train, &pool, &strategy, draws, &mut rng)?;
    Ok(dist.class)
}

/// Features of items emitted by a strategy (mixed items contribute their
/// mixed features), wrapped as a dataset for nearest-neighbor queries.
fn strategy_sampled_features(
    bundle: &Bundle,
    strategy_name: &str,
    sample: usize,
) -> Result<Dataset64> {
    let strategy = resolve_strategy(strategy_name, bundle)?;
    let pool = build_pair_pool(&bundle.train);
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FA);
    let mut examples = Vec::with_capacity(sample);
    while examples.len() < sample {
        let b = (sample - examples.len()).min(256);
        let batch = build_minibatch(&bundle.train, &pool, &strategy, b, &mut rng)?;
        for item in batch.items {
            let features = match item {
                BatchItem::Plain(i) => bundle.train.example(i).features.clone(),
                BatchItem::Mixed(m) => m.features,
            };
            examples.push(Example::new(features, 0, 0));
        }
    }
    Dataset::new(examples, 2, 1, Split::Train).map_err(|e| anyhow!("{e}"))
}

/// Run the whole grid and write every result file. Returns `true` when all
/// cells succeeded.
pub fn run_experiment_grid(
    config: &ExperimentConfig,
    out_dir: &Path,
    workers: Option<usize>,
    seed_offset: u64,
) -> Result<bool> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let seeds: Vec<u64> = config
        .seeds
        .iter()
        .map(|s| s.wrapping_add(seed_offset))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .context("building worker pool")?;

    // One cell per (strategy, seed), parallel over the whole grid.
    let cells: Vec<(usize, u64)> = (0..config.strategies.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<std::result::Result<CellOutcome, CellFailure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(strategy_idx, seed)| run_cell(config, &config.strategies[strategy_idx], seed))
            .collect()
    });

    // Deterministic write order: strategies in config order, seeds ascending.
    let mut runs_rows = Vec::new();
    let mut training_rows = Vec::new();
    let mut failure_rows = Vec::new();
    let mut per_strategy: Vec<Vec<&CellMetrics>> = vec![Vec::new(); config.strategies.len()];
    let mut saved_models = Vec::new();
    for (&(strategy_idx, _), result) in cells.iter().zip(&results) {
        match result {
            Ok(outcome) => {
                runs_rows.extend(outcome.runs_rows.iter().cloned());
                training_rows.push(outcome.training_row.clone());
                per_strategy[strategy_idx].push(&outcome.metrics);
                if let Some((name, model)) = &outcome.model {
                    saved_models.push((name.clone(), model));
                }
            }
            Err(failure) => failure_rows.push(format!(
                "{},{},{},\"{}\"",
                failure.strategy,
                failure.seed,
                failure.stage,
                failure.error.replace('"', "'")
            )),
        }
    }

    write_lines(&out_dir.join("runs.csv"), REPORT_CSV_HEADER, &runs_rows)?;
    write_lines(
        &out_dir.join("training.csv"),
        "strategy,seed,best_epoch,train_loss,val_accuracy",
        &training_rows,
    )?;

    // summary.csv: long format, one row per (strategy, metric).
    let mut summary_rows = Vec::new();
    for (strategy_idx, name) in config.strategies.iter().enumerate() {
        let metrics = &per_strategy[strategy_idx];
        if metrics.is_empty() {
            continue;
        }
        let columns: [(&str, Vec<f64>); 5] = [
            (
                "test_accuracy",
                metrics.iter().map(|m| m.test_accuracy).collect(),
            ),
            (
                "test_worst_group_accuracy",
                metrics
                    .iter()
                    .map(|m| m.test_worst_group_accuracy)
                    .collect(),
            ),
            (
                "test_worst_domain_accuracy",
                metrics
                    .iter()
                    .map(|m| m.test_worst_domain_accuracy)
                    .collect(),
            ),
            (
                "test_auroc",
                metrics.iter().filter_map(|m| m.test_auroc).collect(),
            ),
            (
                "val_accuracy",
                metrics.iter().map(|m| m.val_accuracy).collect(),
            ),
        ];
        for (metric, values) in columns {
            if values.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&values);
            summary_rows.push(format!("{name},{metric},{},{mean},{std}", values.len()));
        }
    }
    write_lines(
        &out_dir.join("summary.csv"),
        "strategy,metric,n_runs,mean,std",
        &summary_rows,
    )?;

    // Analyses run on the first seed's bundle.
    let analysis_bundle = make_bundle(&config.dataset, seeds[0])?;

    if config.analysis.sampled_distribution {
        let mut rows = Vec::new();
        let mut dataset_row = |label: &str, data: &Dataset64| -> Result<()> {
            let dist = empirical_class_distribution(data)?;
            rows.push(sampled_row(label, &dist));
            Ok(())
        };
        dataset_row("dataset:train", &analysis_bundle.train)?;
        dataset_row("dataset:val", &analysis_bundle.val)?;
        dataset_row("dataset:test", &analysis_bundle.test)?;
        for name in &config.strategies {
            match strategy_sampled_class(
                &analysis_bundle,
                name,
                config.analysis.sampled_distribution_draws,
            ) {
                Ok(dist) => rows.push(sampled_row(name, &dist)),
                Err(e) => failure_rows.push(format!(
                    "{name},{},sampled_distribution,\"{}\"",
                    seeds[0],
                    e.to_string().replace('"', "'")
                )),
            }
        }
        write_lines(
            &out_dir.join("sampled_distribution.csv"),
            "source,majority_class_proportion,class_probs",
            &rows,
        )?;
    }

    if config.analysis.divergence_scatter {
        let rows =
            divergence_scatter_rows(config, &analysis_bundle, &per_strategy, &mut failure_rows)?;
        write_lines(
            &out_dir.join("divergence_accuracy.csv"),
            "domain,strategy,kl_divergence,tv_divergence,covariate_divergence,accuracy,pearson_kl",
            &rows,
        )?;
    }

    if config.analysis.uniformity_report {
        let combined = analysis_bundle.concat_all()?;
        let report = uniformity_shift_report(&combined)?;
        let rows: Vec<String> = report
            .iter()
            .map(|entry| {
                format!(
                    "{},{},{},{}",
                    entry.domain,
                    entry.n,
                    format_opt(entry.minority_class_ratio),
                    entry.class_entropy
                )
            })
            .collect();
        write_lines(
            &out_dir.join("uniformity.csv"),
            "domain,n,minority_class_ratio,class_entropy",
            &rows,
        )?;
    }

    if !saved_models.is_empty() {
        let models_dir = out_dir.join("models");
        fs::create_dir_all(&models_dir)?;
        for (name, model) in saved_models {
            save_model(model, &models_dir.join(name))?;
        }
    }

    write_lines(
        &out_dir.join("failures.csv"),
        "strategy,seed,stage,error",
        &failure_rows,
    )?;

    Ok(failure_rows.is_empty())
}

fn sampled_row(label: &str, dist: &ClassDistribution<f64>) -> String {
    let majority = dist
        .probs()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let probs: Vec<String> = dist.probs().iter().map(|p| p.to_string()).collect();
    format!("{label},{majority},{}", probs.join(";"))
}

fn divergence_scatter_rows(
    config: &ExperimentConfig,
    bundle: &Bundle,
    per_strategy: &[Vec<&CellMetrics>],
    failure_rows: &mut Vec<String>,
) -> Result<Vec<String>> {
    // Sampled class distribution (and optionally a sampled feature set) per
    // strategy; skip strategies whose sampling fails.
    let mut sampled: Vec<Option<ClassDistribution<f64>>> = Vec::new();
    let mut sampled_features: Vec<Option<Dataset64>> = Vec::new();
    for name in &config.strategies {
        match strategy_sampled_class(bundle, name, config.analysis.sampled_distribution_draws) {
            Ok(dist) => sampled.push(Some(dist)),
            Err(e) => {
                failure_rows.push(format!(
                    "{name},,divergence_scatter,\"{}\"",
                    e.to_string().replace('"', "'")
                ));
                sampled.push(None);
            }
        }
        if config.analysis.covariate_divergence {
            match strategy_sampled_features(bundle, name, config.analysis.covariate_sample) {
                Ok(set) => sampled_features.push(Some(set)),
                Err(_) => sampled_features.push(None),
            }
        } else {
            sampled_features.push(None);
        }
    }

    let mut rows = Vec::new();
    for (domain, domain_data) in bundle.test.per_domain() {
        let domain_dist = empirical_class_distribution(&domain_data)?;
        let mut cells: Vec<(usize, f64, f64, Option<f64>, f64)> = Vec::new();
        for idx in 0..config.strategies.len() {
            let Some(dist) = &sampled[idx] else { continue };
            let metrics = &per_strategy[idx];
            if metrics.is_empty() {
                continue;
            }
            let accs: Vec<f64> = metrics
                .iter()
                .filter_map(|m| {
                    m.per_domain_test_accuracy
                        .iter()
                        .find(|(d, _)| *d == domain)
                        .map(|(_, a)| *a)
                })
                .collect();
            if accs.is_empty() {
                continue;
            }
            let kl = distribution_divergence(dist, &domain_dist, DivergenceKind::Kl)
                .map_err(|e| anyhow!("{e}"))?;
            let tv = distribution_divergence(dist, &domain_dist, DivergenceKind::TotalVariation)
                .map_err(|e| anyhow!("{e}"))?;
            let covariate = sampled_features[idx]
                .as_ref()
                .map(|set| nn_covariate_divergence(set, &domain_data))
                .transpose()
                .map_err(|e| anyhow!("{e}"))?;
            cells.push((idx, kl, tv, covariate, mean_std(&accs).0));
        }
        let pearson = if cells.len() >= 3 {
            let kls: Vec<f64> = cells.iter().map(|c| c.1).collect();
            let accs: Vec<f64> = cells.iter().map(|c| c.4).collect();
            pearson_correlation(&kls, &accs).ok()
        } else {
            None
        };
        for (idx, kl, tv, covariate, acc) in cells {
            rows.push(format!(
                "{domain},{},{kl},{tv},{},{acc},{}",
                config.strategies[idx],
                format_opt(covariate),
                format_opt(pearson)
            ));
        }
    }
    Ok(rows)
}

/// `generate` subcommand: write a dataset CSV plus its metadata file.
pub fn generate(config: &ExperimentConfig, out_dir: &Path, seed_offset: u64) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let csv_path: PathBuf = out_dir.join("dataset.csv");
    let meta_path = out_dir.join("metadata.txt");
    match &config.dataset {
        DatasetSource::Temporal(gen_config) => {
            let mut gen_config = gen_config.clone();
            gen_config.seed = gen_config.seed.wrapping_add(seed_offset);
            let bundle = gen_temporal_label_shift(&gen_config)?;
            selmix::io::write_datasets_csv(&[&bundle.train, &bundle.val, &bundle.test], &csv_path)?;
            bundle.metadata.write_to(&meta_path)?;
        }
        DatasetSource::Spurious(gen_config) => {
            let mut gen_config = gen_config.clone();
            gen_config.seed = gen_config.seed.wrapping_add(seed_offset);
            let bundle = gen_spurious_correlation(&gen_config)?;
            selmix::io::write_datasets_csv(&[&bundle.train, &bundle.val, &bundle.test], &csv_path)?;
            bundle.metadata.write_to(&meta_path)?;
        }
        DatasetSource::Csv { .. } => {
            bail!("`generate` needs a generator dataset (dataset.kind = temporal | spurious)")
        }
    }
    println!("wrote {} and {}", csv_path.display(), meta_path.display());
    Ok(())
}
