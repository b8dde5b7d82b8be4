//! Error types, grouped by the process exit code they map to.

use thiserror::Error;

/// Configuration and usage problems (exit code 1).
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Problems with input data (exit code 2).
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV near row {row}: {message}")]
    Csv {
        path: String,
        row: u64,
        message: String,
    },
    #[error("{path}: missing column '{column}' in header")]
    MissingColumn { path: String, column: String },
    #[error("{path} row {row}: field '{column}' is empty")]
    EmptyField {
        path: String,
        row: u64,
        column: String,
    },
    #[error("{path} row {row}: cannot parse '{column}' value '{value}': {reason}")]
    BadField {
        path: String,
        row: u64,
        column: String,
        value: String,
        reason: String,
    },
    #[error("all data was filtered away; nothing left to index")]
    EmptyDataset,
    #[error("need at least {min} sessions to split, got {got}")]
    TooFewSessions { min: usize, got: usize },
    #[error("unknown item '{0}'")]
    UnknownItem(String),
    #[error("unknown item index {0}")]
    UnknownItemIndex(usize),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("empty test set; nothing to evaluate")]
    EmptyTestSet,
}

/// Numeric failures in tensor ops, gradients, or training (exit code 3).
#[derive(Debug, Error)]
pub enum NumericError {
    #[error("{op}: shape mismatch: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient encountered during backward")]
    NonFiniteGradient,
    #[error("backward requires a scalar loss, got shape {shape}")]
    LossNotScalar { shape: String },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("gather: index {index} out of bounds for {rows} rows")]
    IndexOutOfBounds { index: usize, rows: usize },
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("training aborted: {0}")]
    TrainingAborted(String),
}

/// Top-level error for the library and CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

impl Error {
    /// Process exit code for this error: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) => 2,
            Error::Numeric(_) => 3,
        }
    }
}
