//! Experiment drivers and report writers for the `predictability` binary.

pub mod chart;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod predictors;
pub mod report;

pub use config::{ExperimentConfig, Inputs};
pub use error::{CliError, Result};
pub use report::RunReport;
