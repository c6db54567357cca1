use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// The inertia matrix failed to factor or is too badly conditioned.
    /// Valid parameters never produce this; it means the model is corrupted.
    #[error("inertia matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    SingularInertia { condition: f64 },

    #[error("simulation became unstable at t = {time} s: {detail}")]
    Unstable { time: f64, detail: String },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("energy audit requires a force-free trace (nonzero external force at t = {time} s)")]
    ForcesPresent { time: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid scenario:\n{}", format_issues(.0))]
    InvalidConfig(Vec<String>),
}

fn format_issues(issues: &[String]) -> String {
    issues
        .iter()
        .map(|i| format!("  - {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
