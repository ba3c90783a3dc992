use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("{path}: column `{column}` not found in header")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("budget exhausted: {remaining} remaining, {required} required")]
    BudgetExhausted { remaining: f64, required: f64 },

    #[error("sample {0} is already labeled")]
    AlreadyLabeled(usize),

    #[error("sample {0} is not in the unlabeled set")]
    NotUnlabeled(usize),

    #[error("unknown mobility mode code {0}")]
    UnknownMode(f64),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from user configuration rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
