use crate::solver::{SolverError, Status};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: parse error at line {line}, column {column}: {msg}")]
    Parse { path: String, line: usize, column: usize, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    History { path: String, msg: String },

    #[error("negative {kind} realization at `{name}`, period {period}: {value}")]
    NegativeRealization { kind: &'static str, name: String, period: usize, value: f64 },

    #[error("solver finished with status `{status}` while {context}")]
    SolverStatus { status: Status, context: String },

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error("invalid option: {0}")]
    InvalidOption(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }

    pub(crate) fn status(status: Status, context: impl Into<String>) -> Self {
        Error::SolverStatus { status, context: context.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
