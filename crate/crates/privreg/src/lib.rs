//! Experiment harness for the truthful private regression mechanisms in
//! [`privreg_core`]: config files, a parallel and deterministic Monte Carlo
//! runner, CSV/JSON reports and the privacy audits behind the `privreg` CLI.

use std::path::PathBuf;

pub mod audit;
pub mod config;
pub mod experiment;
pub mod report;

pub use config::ExperimentSpec;
pub use experiment::{run_experiment, ExperimentReport};

/// Anything that makes a config or a command-line request unusable.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Core(#[from] privreg_core::Error),
}
