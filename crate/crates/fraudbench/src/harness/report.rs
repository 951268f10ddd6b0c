//! Report files: full results JSON, per-run summary CSV, learning-curve CSVs
//! and sweep aggregate tables.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::harness::runner::{RunResult, SweepOutcome};
use crate::{Error, Result};

/// Learning curves plot the success rate over the trailing this-many rounds.
pub const ROLLING_WINDOW: usize = 100;

/// Writes results.json, summary.csv and one learning-curve CSV per run.
pub fn write_report(results: &[RunResult], out_dir: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Contract("no results to report".into()));
    }
    fs::create_dir_all(out_dir)?;
    fs::write(
        out_dir.join("results.json"),
        serde_json::to_string_pretty(results)?,
    )?;
    fs::write(out_dir.join("summary.csv"), summary_csv(results))?;
    for r in results {
        fs::write(out_dir.join(curve_file_name(r)), curve_csv(&r.rewards))?;
    }
    Ok(())
}

/// Everything `write_report` does, plus aggregates.csv and, when runs failed,
/// failures.json.
pub fn write_sweep_report(outcome: &SweepOutcome, out_dir: &Path) -> Result<()> {
    write_report(&outcome.results, out_dir)?;
    fs::write(out_dir.join("aggregates.csv"), aggregates_csv(outcome))?;
    if !outcome.failures.is_empty() {
        fs::write(
            out_dir.join("failures.json"),
            serde_json::to_string_pretty(&outcome.failures)?,
        )?;
    }
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<RunResult>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .filter_map(|c| match c {
            c if c.is_ascii_alphanumeric() || c == '-' || c == '.' => Some(c),
            '%' => None,
            _ => Some('-'),
        })
        .collect()
}

pub fn curve_file_name(r: &RunResult) -> String {
    format!(
        "curve_{}_{}_{}_seed{}.csv",
        sanitize(&r.config.engine.kind.to_string()),
        sanitize(&r.config.partition.label()),
        sanitize(&r.config.attacker.label()),
        r.seed
    )
}

fn checkpoint_union<'a, I: Iterator<Item = &'a RunResult>>(results: I) -> Vec<usize> {
    let mut set = BTreeSet::new();
    for r in results {
        set.extend(r.checkpoint_rates.keys().copied());
    }
    set.into_iter().collect()
}

fn summary_csv(results: &[RunResult]) -> String {
    let checkpoints = checkpoint_union(results.iter());
    let mut out = String::from("engine,partition,attacker,seed");
    for c in &checkpoints {
        out.push_str(&format!(",rate_{c}"));
    }
    out.push('\n');
    for r in results {
        out.push_str(&format!(
            "{},{},{},{}",
            r.config.engine.kind,
            r.config.partition.label(),
            r.config.attacker.label(),
            r.seed
        ));
        for c in &checkpoints {
            match r.checkpoint_rates.get(c) {
                Some(rate) => out.push_str(&format!(",{rate:.6}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Round number and mean reward over the trailing window (shorter at the
/// start of the trace).
fn curve_csv(rewards: &[u8]) -> String {
    let mut out = String::from("round,rolling_rate\n");
    let mut window_sum = 0u64;
    for (i, &r) in rewards.iter().enumerate() {
        window_sum += u64::from(r);
        if i >= ROLLING_WINDOW {
            window_sum -= u64::from(rewards[i - ROLLING_WINDOW]);
        }
        let width = (i + 1).min(ROLLING_WINDOW);
        out.push_str(&format!(
            "{},{:.6}\n",
            i + 1,
            window_sum as f64 / width as f64
        ));
    }
    out
}

fn aggregates_csv(outcome: &SweepOutcome) -> String {
    let mut checkpoints = BTreeSet::new();
    for row in &outcome.aggregates {
        checkpoints.extend(row.mean_rates.keys().copied());
    }
    let mut out = String::from("engine,partition,attacker,n_runs");
    for c in &checkpoints {
        out.push_str(&format!(",mean_{c},std_{c}"));
    }
    out.push_str(",best_baseline\n");
    for row in &outcome.aggregates {
        out.push_str(&format!(
            "{},{},{},{}",
            row.engine, row.partition, row.attacker, row.n_runs
        ));
        for c in &checkpoints {
            match (row.mean_rates.get(c), row.std_rates.get(c)) {
                (Some(m), Some(s)) => out.push_str(&format!(",{m:.6},{s:.6}")),
                _ => out.push_str(",,"),
            }
        }
        let setting = format!("{}|{}", row.engine, row.partition);
        let is_best = outcome.best_baselines.get(&setting) == Some(&row.attacker);
        out.push_str(if is_best { ",yes\n" } else { ",no\n" });
    }
    out
}
