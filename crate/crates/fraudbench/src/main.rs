//! Command line front end: generate data, train engines, run attacks and
//! sweeps, and regenerate reports.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use fraudbench::core::{DataSpec, RunConfig};
use fraudbench::datagen::{balance, generate_clusters, load_csv, split, write_csv, ScenarioSpec};
use fraudbench::detectors::{evaluate_engine_model, fit_engine, Metrics};
use fraudbench::harness::{
    parse_run_config, parse_sweep_spec, read_results, run_attack, run_sweep, write_report,
    write_sweep_report, SweepOutcome, SweepSpec,
};
use fraudbench::numkit::derive_seed;
use fraudbench::{Error, Result};

#[derive(Parser)]
#[command(
    name = "fraudbench",
    about = "Benchmark reinforcement-learning and mimicry attacks on rule+ML fraud engines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario dataset and write it as CSV.
    GenData {
        /// Run config supplying the data.scenario.* keys (defaults apply).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides run.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; receives data.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a fraud engine on a dataset and save it with quality metrics.
    TrainEngine {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; receives engine.json and engine_metrics.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one attack campaign and write its result files.
    Attack {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every configured (engine x partition x attacker x seed) combination.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed of every run; conflicts with sweep.seeds.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Worker thread cap for the sweep; 0 uses the rayon default.
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
    },
    /// Regenerate summary.csv and the curve CSVs from an existing results.json.
    Report {
        /// Directory containing results.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    };
    std::process::exit(code);
}

fn load_run_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut config = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            parse_run_config(&text)?
        }
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn load_sweep_spec(path: Option<&Path>, seed: Option<u64>) -> Result<SweepSpec> {
    let mut spec = match path {
        None => SweepSpec {
            runs: vec![RunConfig::default()],
        },
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            parse_sweep_spec(&text)?
        }
    };
    if let Some(s) = seed {
        for run in &mut spec.runs {
            run.seed = s;
        }
        spec.validate()?;
    }
    Ok(spec)
}

/// Builds the dataset exactly as `run_attack` would for the same config.
fn build_dataset(config: &RunConfig) -> Result<fraudbench::core::LabeledDataset> {
    match &config.data {
        DataSpec::Scenario {
            n_features,
            clusters_per_class,
            separation,
            n_samples,
        } => generate_clusters(&ScenarioSpec {
            n_features: *n_features,
            clusters_per_class: *clusters_per_class,
            class_separation: *separation,
            n_samples: *n_samples,
            seed: derive_seed(config.seed, "data"),
        }),
        DataSpec::Csv { path, label_column } => load_csv(Path::new(path), label_column),
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::GenData { config, seed, out } => {
            let config = load_run_config(config.as_deref(), seed)?;
            if matches!(config.data, DataSpec::Csv { .. }) {
                return Err(Error::Config(
                    "gen-data needs a scenario data source, not a CSV".into(),
                ));
            }
            let ds = build_dataset(&config)?;
            fs::create_dir_all(&out)?;
            let path = out.join("data.csv");
            write_csv(&ds, &path, "class")?;
            println!(
                "wrote {} rows x {} features to {}",
                ds.n_samples(),
                ds.n_features(),
                path.display()
            );
            Ok(0)
        }
        Command::TrainEngine { config, seed, out } => {
            let config = load_run_config(config.as_deref(), seed)?;
            let ds = build_dataset(&config)?;
            let ds = balance(&ds, derive_seed(config.seed, "balance"))?;
            let (train, test) = split(
                &ds,
                config.train_fraction,
                derive_seed(config.seed, "split"),
            )?;
            let (engine, report) =
                fit_engine(&train, &config.engine, derive_seed(config.seed, "engine"))?;
            let test_metrics = evaluate_engine_model(&engine, &test)?;
            fs::create_dir_all(&out)?;
            engine.save(&out.join("engine.json"))?;
            #[derive(serde::Serialize)]
            struct EngineReportDoc {
                choice: fraudbench::detectors::HyperChoice,
                cv_f1: f64,
                train_metrics: Metrics,
                test_metrics: Metrics,
            }
            let doc = EngineReportDoc {
                choice: report.choice,
                cv_f1: report.cv_f1,
                train_metrics: report.train_metrics,
                test_metrics,
            };
            fs::write(
                out.join("engine_metrics.json"),
                serde_json::to_string_pretty(&doc)?,
            )?;
            println!(
                "engine {} saved: cv_f1 {:.4}, test accuracy {:.4}, test f1 {:.4}",
                config.engine.kind, doc.cv_f1, test_metrics.accuracy, test_metrics.f1
            );
            Ok(0)
        }
        Command::Attack { config, seed, out } => {
            let config = load_run_config(config.as_deref(), seed)?;
            let result = run_attack(&config)?;
            write_report(&std::slice::from_ref(&result), &out)?;
            print!(
                "attack {} vs {} ({}) seed {}:",
                result.config.attacker.label(),
                result.config.engine.kind,
                result.config.partition.label(),
                result.seed
            );
            for (n, rate) in &result.checkpoint_rates {
                print!(" rate@{n} {rate:.4}");
            }
            println!(" ({:.1}s)", result.duration_secs);
            Ok(0)
        }
        Command::Sweep {
            config,
            seed,
            out,
            parallelism,
        } => {
            let spec = load_sweep_spec(config.as_deref(), seed)?;
            let outcome = run_sweep(&spec, parallelism)?;
            write_sweep_report(&outcome, &out)?;
            print_aggregate_table(&outcome);
            if outcome.failures.is_empty() {
                Ok(0)
            } else {
                for f in &outcome.failures {
                    eprintln!(
                        "run {} failed ({} vs {} {}, seed {}): {}",
                        f.index, f.attacker, f.engine, f.partition, f.seed, f.error
                    );
                }
                Ok(1)
            }
        }
        Command::Report { out } => {
            let results = read_results(&out.join("results.json"))?;
            write_report(&results, &out)?;
            println!("regenerated reports for {} runs in {}", results.len(), out.display());
            Ok(0)
        }
    }
}

fn print_aggregate_table(outcome: &SweepOutcome) {
    let mut checkpoints: Vec<usize> = Vec::new();
    for row in &outcome.aggregates {
        for c in row.mean_rates.keys() {
            if !checkpoints.contains(c) {
                checkpoints.push(*c);
            }
        }
    }
    checkpoints.sort_unstable();
    print!(
        "{:<8} {:<22} {:<26} {:>2}",
        "engine", "partition", "attacker", "n"
    );
    for c in &checkpoints {
        print!(" {:>15}", format!("rate@{c}"));
    }
    println!(" best");
    for row in &outcome.aggregates {
        print!(
            "{:<8} {:<22} {:<26} {:>2}",
            row.engine, row.partition, row.attacker, row.n_runs
        );
        for c in &checkpoints {
            match (row.mean_rates.get(c), row.std_rates.get(c)) {
                (Some(m), Some(s)) => print!(" {:>15}", format!("{m:.3}+-{s:.3}")),
                _ => print!(" {:>15}", ""),
            }
        }
        let setting = format!("{}|{}", row.engine, row.partition);
        let best = outcome.best_baselines.get(&setting) == Some(&row.attacker);
        println!(" {}", if best { "*" } else { "" });
    }
}
