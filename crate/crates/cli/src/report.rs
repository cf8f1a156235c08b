//! Plot-data exports and the summary audit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use selmix::metrics::pearson_correlation;

use crate::config::BarMetric;

/// Which plot-ready CSV to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportKind {
    Bars,
    Scatter,
    Timeseries,
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    if !path.exists() {
        bail!(
            "missing results file {} (run `selmix run` first)",
            path.display()
        );
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| anyhow!("{e}"))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| anyhow!("{e}"))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn column_index(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("{}: missing column `{name}`", path.display()))
}

/// Emit a plot-ready CSV derived from the result files in `results_dir`.
/// Returns the path written.
pub fn emit_plot_data(
    results_dir: &Path,
    kind: ReportKind,
    bar_metric: BarMetric,
) -> Result<PathBuf> {
    match kind {
        ReportKind::Bars => {
            let source = results_dir.join("summary.csv");
            let (header, rows) = read_csv(&source)?;
            let strategy = column_index(&header, "strategy", &source)?;
            let metric = column_index(&header, "metric", &source)?;
            let mean = column_index(&header, "mean", &source)?;
            let std = column_index(&header, "std", &source)?;
            let mut out = String::from("strategy,mean,std\n");
            let mut matched = 0;
            for row in &rows {
                if row[metric] == bar_metric.as_str() {
                    out.push_str(&format!("{},{},{}\n", row[strategy], row[mean], row[std]));
                    matched += 1;
                }
            }
            if matched == 0 {
                bail!(
                    "no `{}` rows in {} (available metrics: {})",
                    bar_metric.as_str(),
                    source.display(),
                    available_metrics(&rows, metric).join(", ")
                );
            }
            let path = results_dir.join("plot_bars.csv");
            fs::write(&path, out)?;
            Ok(path)
        }
        ReportKind::Scatter => {
            let source = results_dir.join("divergence_accuracy.csv");
            let (header, rows) = read_csv(&source)?;
            let domain = column_index(&header, "domain", &source)?;
            let strategy = column_index(&header, "strategy", &source)?;
            let kl = column_index(&header, "kl_divergence", &source)?;
            let accuracy = column_index(&header, "accuracy", &source)?;
            let pearson = column_index(&header, "pearson_kl", &source)?;
            let mut out = String::from("divergence,accuracy,strategy,domain,pearson\n");
            for row in &rows {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    row[kl], row[accuracy], row[strategy], row[domain], row[pearson]
                ));
            }
            let path = results_dir.join("plot_scatter.csv");
            fs::write(&path, out)?;
            Ok(path)
        }
        ReportKind::Timeseries => {
            let source = results_dir.join("uniformity.csv");
            let (header, rows) = read_csv(&source)?;
            let domain = column_index(&header, "domain", &source)?;
            let minority = column_index(&header, "minority_class_ratio", &source)?;
            let entropy = column_index(&header, "class_entropy", &source)?;
            let mut out = String::from("domain,minority_class_ratio,class_entropy\n");
            for row in &rows {
                out.push_str(&format!(
                    "{},{},{}\n",
                    row[domain], row[minority], row[entropy]
                ));
            }
            let path = results_dir.join("plot_timeseries.csv");
            fs::write(&path, out)?;
            Ok(path)
        }
    }
}

fn available_metrics(rows: &[Vec<String>], metric_col: usize) -> Vec<String> {
    let mut metrics: Vec<String> = rows.iter().map(|r| r[metric_col].clone()).collect();
    metrics.sort();
    metrics.dedup();
    metrics
}

/// Recompute summary statistics from the per-run rows and compare with
/// `summary.csv`. Returns the list of problems (empty when consistent).
pub fn audit(results_dir: &Path, expected_grid: Option<(&[String], usize)>) -> Result<Vec<String>> {
    let runs_path = results_dir.join("runs.csv");
    let summary_path = results_dir.join("summary.csv");
    let (runs_header, runs_rows) = read_csv(&runs_path)?;
    let (summary_header, summary_rows) = read_csv(&summary_path)?;

    let strategy = column_index(&runs_header, "strategy", &runs_path)?;
    let seed = column_index(&runs_header, "seed", &runs_path)?;
    let split = column_index(&runs_header, "split", &runs_path)?;
    let domain = column_index(&runs_header, "domain", &runs_path)?;
    let accuracy = column_index(&runs_header, "accuracy", &runs_path)?;
    let worst_group = column_index(&runs_header, "worst_group_accuracy", &runs_path)?;
    let worst_domain = column_index(&runs_header, "worst_domain_accuracy", &runs_path)?;
    let auroc = column_index(&runs_header, "auroc", &runs_path)?;

    let mut problems = Vec::new();

    // Collect per-(strategy, metric) value lists from the `all` rows,
    // keeping first-appearance strategy order.
    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<(String, &'static str), Vec<f64>> = BTreeMap::new();
    let mut seeds_by_strategy: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let parse = |raw: &str| -> Option<f64> { raw.parse().ok() };
    for row in &runs_rows {
        if row[domain] != "all" {
            continue;
        }
        let name = row[strategy].clone();
        if !order.contains(&name) {
            order.push(name.clone());
        }
        match row[split].as_str() {
            "test" => {
                seeds_by_strategy
                    .entry(name.clone())
                    .or_default()
                    .push(row[seed].clone());
                for (metric, col) in [
                    ("test_accuracy", accuracy),
                    ("test_worst_group_accuracy", worst_group),
                    ("test_worst_domain_accuracy", worst_domain),
                    ("test_auroc", auroc),
                ] {
                    if let Some(v) = parse(&row[col]) {
                        values.entry((name.clone(), metric)).or_default().push(v);
                    }
                }
            }
            "val" => {
                if let Some(v) = parse(&row[accuracy]) {
                    values
                        .entry((name.clone(), "val_accuracy"))
                        .or_default()
                        .push(v);
                }
            }
            _ => {}
        }
    }

    if let Some((strategies, num_seeds)) = expected_grid {
        for name in strategies {
            match seeds_by_strategy.get(name) {
                None => problems.push(format!("strategy `{name}` has no completed runs")),
                Some(seeds) if seeds.len() != num_seeds => problems.push(format!(
                    "strategy `{name}` has {} completed runs, expected {num_seeds}",
                    seeds.len()
                )),
                _ => {}
            }
        }
    }

    // Compare every summary row against the recomputation.
    let s_strategy = column_index(&summary_header, "strategy", &summary_path)?;
    let s_metric = column_index(&summary_header, "metric", &summary_path)?;
    let s_n = column_index(&summary_header, "n_runs", &summary_path)?;
    let s_mean = column_index(&summary_header, "mean", &summary_path)?;
    let s_std = column_index(&summary_header, "std", &summary_path)?;
    let metric_names = [
        "test_accuracy",
        "test_worst_group_accuracy",
        "test_worst_domain_accuracy",
        "test_auroc",
        "val_accuracy",
    ];
    let mut summary_seen = 0usize;
    for row in &summary_rows {
        let key = (
            row[s_strategy].clone(),
            *metric_names
                .iter()
                .find(|m| **m == row[s_metric])
                .unwrap_or(&""),
        );
        if key.1.is_empty() {
            problems.push(format!("summary names unknown metric `{}`", row[s_metric]));
            continue;
        }
        summary_seen += 1;
        let Some(vals) = values.get(&key) else {
            problems.push(format!(
                "summary row ({}, {}) has no per-run rows",
                key.0, key.1
            ));
            continue;
        };
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = if vals.len() < 2 {
            0.0
        } else {
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        if row[s_n].parse::<usize>().ok() != Some(vals.len()) {
            problems.push(format!(
                "({}, {}): n_runs {} but {} per-run rows",
                key.0,
                key.1,
                row[s_n],
                vals.len()
            ));
        }
        match (parse(&row[s_mean]), parse(&row[s_std])) {
            (Some(m), Some(s)) => {
                if !close(m, mean) {
                    problems.push(format!(
                        "({}, {}): summary mean {m} vs recomputed {mean}",
                        key.0, key.1
                    ));
                }
                if !close(s, std) {
                    problems.push(format!(
                        "({}, {}): summary std {s} vs recomputed {std}",
                        key.0, key.1
                    ));
                }
            }
            _ => problems.push(format!("({}, {}): unparseable summary row", key.0, key.1)),
        }
    }
    // Every recomputable (strategy, metric) cell must appear in the summary.
    if summary_seen != values.len() {
        problems.push(format!(
            "summary has {summary_seen} rows but {} recomputable cells",
            values.len()
        ));
    }

    // Cross-check: the scatter file's pearson column is recomputable.
    let scatter_path = results_dir.join("divergence_accuracy.csv");
    if scatter_path.exists() {
        let (header, rows) = read_csv(&scatter_path)?;
        let domain = column_index(&header, "domain", &scatter_path)?;
        let kl = column_index(&header, "kl_divergence", &scatter_path)?;
        let acc = column_index(&header, "accuracy", &scatter_path)?;
        let pearson = column_index(&header, "pearson_kl", &scatter_path)?;
        let mut by_domain: BTreeMap<String, Vec<(f64, f64, Option<f64>)>> = BTreeMap::new();
        for row in &rows {
            if let (Some(k), Some(a)) = (parse(&row[kl]), parse(&row[acc])) {
                by_domain.entry(row[domain].clone()).or_default().push((
                    k,
                    a,
                    parse(&row[pearson]),
                ));
            }
        }
        for (domain, cells) in by_domain {
            let recorded: Vec<Option<f64>> = cells.iter().map(|c| c.2).collect();
            let Some(first) = recorded.first().copied().flatten() else {
                continue;
            };
            let kls: Vec<f64> = cells.iter().map(|c| c.0).collect();
            let accs: Vec<f64> = cells.iter().map(|c| c.1).collect();
            if let Ok(r) = pearson_correlation(&kls, &accs) {
                if (r - first).abs() > 1e-9 {
                    problems.push(format!(
                        "domain {domain}: scatter pearson {first} vs recomputed {r}"
                    ));
                }
            }
        }
    }

    Ok(problems)
}
