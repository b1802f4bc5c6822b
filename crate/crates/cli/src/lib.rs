//! Config-driven runner for the stalker-core experiments.
//!
//! A run reads a flat `key=value` file, resolves it against defaults, the
//! `STALKER_*` environment and command-line flags, and writes a manifest
//! plus CSV results into the output directory. Replicas are spread over a
//! worker pool but each one draws from its own stream, so the files do not
//! depend on the thread count.

pub mod config;
pub mod runner;

pub use config::{load, parse_config, ConfigError, Experiment, ExperimentConfig, Overrides};
pub use runner::{run_experiment, run_file, RunError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Run(#[from] RunError),
}
