use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// The configuration document could not be decoded (syntax error or unknown key).
    #[error("config: {0}")]
    ConfigSyntax(String),

    /// A configuration field violates one of its constraints.
    #[error("config field `{field}`: {constraint}")]
    ConfigInvalid { field: &'static str, constraint: String },

    #[error("workload: {0}")]
    Workload(String),

    #[error("{path}:{line}: {msg}")]
    TraceFormat { path: PathBuf, line: usize, msg: String },

    #[error("experiment: {0}")]
    Experiment(String),

    #[error("cell {cell}: {source}")]
    Cell { cell: String, source: Box<SimError> },

    #[error("metrics: {0}")]
    Metrics(String),

    /// A state-machine invariant was broken; always a simulator bug.
    #[error("internal consistency: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl SimError {
    pub(crate) fn invalid(field: &'static str, constraint: impl Into<String>) -> Self {
        SimError::ConfigInvalid { field, constraint: constraint.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
