//! Experiment runner: configuration, pipeline stages, and the synthetic
//! dataset generator behind the `cervifuse` binary.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod synth;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use pipeline::{run_all, Run, Stage};
