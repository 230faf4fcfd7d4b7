//! Experiment runner, metrics and reporting behind the `rlnd` binary.

mod cli;
mod config;
mod experiment;
mod metrics;
mod report;
pub mod synthcheck;

pub use config::{CrossValidation, DataConfig, ExperimentConfig};
pub use experiment::{
    attack_sweep, calibrate, evaluate, prepare_cell, read_rows, run_cell, run_experiment, sweep_epsilons,
    train_baseline, write_rows, Cell, CellData, CellOutcome, ResultRow, CSV_HEADER,
};
pub use metrics::{auroc, compute_metrics, Metrics};
pub use report::{series, summarize, write_report, Series, SummaryRow};
pub use synthcheck::{run_synth_check, CheckResult};
pub use cli::{run_cli, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
