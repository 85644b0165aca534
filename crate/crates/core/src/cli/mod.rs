//! Command-line surface: configuration files, experiment runs and reports.

pub mod commands;
pub mod config;

pub use commands::{cmd_run, cmd_settling, run_batch, RunOutputs, SettlingRow};
pub use config::{parse, ExperimentSpec};
