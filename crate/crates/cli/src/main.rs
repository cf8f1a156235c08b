//! Experiment runner comparing training-distribution strategies on
//! distribution-shift benchmarks.

mod config;
mod report;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};

use config::BarMetric;
use report::ReportKind;

#[derive(Parser)]
#[command(
    name = "selmix",
    version,
    about = "Train small classifiers under interchangeable batch-sampling strategies \
             (selective mixup, selective sampling, resampling) and report how each \
             reshapes the training distribution."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV plus its metadata file.
    Generate {
        /// Experiment config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Offset added to the generator seed.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Run the full (strategy x seed) grid and write result CSVs.
    Run {
        /// Experiment config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for grid cells (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Offset added to every run seed.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Emit plot-ready CSVs from an existing results directory.
    Report {
        /// Results directory written by `run`.
        #[arg(long)]
        out: PathBuf,
        /// Which plot data to emit.
        #[arg(long, value_enum)]
        kind: ReportKind,
        /// Summary metric for bar plots.
        #[arg(long, default_value = "test_accuracy")]
        metric: String,
    },
    /// Recompute summary statistics from per-run rows and verify them.
    Audit {
        /// Results directory written by `run`.
        #[arg(long)]
        out: PathBuf,
        /// Optional config file to check grid completeness against.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Exit codes: 0 success, 1 partial failure (failed grid cells or audit
/// mismatches), 2 configuration or input errors.
fn main() -> ExitCode {
    match dispatch() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            config,
            out,
            seed_offset,
        } => {
            let config = config::load_config(&config)?;
            runner::generate(&config, &out, seed_offset)?;
            Ok(true)
        }
        Command::Run {
            config: config_path,
            out,
            workers,
            seed_offset,
        } => {
            let config = config::load_config(&config_path)?;
            let out_dir = out
                .or_else(|| config.out_dir.clone())
                .ok_or_else(|| anyhow!("no output directory: pass --out or set out_dir"))?;
            let clean = runner::run_experiment_grid(&config, &out_dir, workers, seed_offset)?;
            if clean {
                println!("grid complete: results in {}", out_dir.display());
            } else {
                println!(
                    "grid complete with failures: see {}",
                    out_dir.join("failures.csv").display()
                );
            }
            Ok(clean)
        }
        Command::Report { out, kind, metric } => {
            let metric = BarMetric::parse(&metric)?;
            let path = report::emit_plot_data(&out, kind, metric)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::Audit { out, config } => {
            let loaded;
            let expected = match &config {
                Some(path) => {
                    loaded = config::load_config(path)?;
                    Some((loaded.strategies.as_slice(), loaded.seeds.len()))
                }
                None => None,
            };
            let problems = report::audit(&out, expected)?;
            if problems.is_empty() {
                println!("audit ok: summary matches per-run rows");
                Ok(true)
            } else {
                for problem in &problems {
                    println!("audit problem: {problem}");
                }
                Ok(false)
            }
        }
    }
}
