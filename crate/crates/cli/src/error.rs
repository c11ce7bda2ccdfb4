use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing inputs for {command}: {}", missing.join(", "))]
    MissingInputs { command: String, missing: Vec<String> },

    #[error("input file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("unsupported dataset: {0}")]
    UnsupportedDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("nothing to chart: the report has no comparisons")]
    EmptyChart,

    #[error("cannot write {}: {message}", path.display())]
    Output { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] predictability::Error),
}

impl CliError {
    pub(crate) fn output(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
