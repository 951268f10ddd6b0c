//! Config-driven experiment runner: builds datasets and engines, executes
//! attack campaigns, computes checkpoint metrics and writes reports.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{parse_run_config, parse_sweep_spec, SweepSpec};
pub use report::{read_results, write_report, write_sweep_report, ROLLING_WINDOW};
pub use runner::{
    aggregate, attack_loop, checkpoint_metrics, run_attack, run_sweep, AggregateRow, RunFailure,
    RunResult, SweepOutcome, ACTION_SCALE_WIDEN,
};
