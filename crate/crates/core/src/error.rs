use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FamlError>;

#[derive(Debug, Error)]
pub enum FamlError {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {name}({x}) is undefined")]
    Domain { name: &'static str, x: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(&'static str),

    #[error(transparent)]
    Data(#[from] DataError),

    /// Non-finite training loss. Carries enough context to locate the offending term.
    #[error("numeric abort at epoch {epoch}, batch {batch}: term `{term}` is {value}")]
    NumericAbort {
        epoch: usize,
        batch: usize,
        term: String,
        value: f64,
    },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Dataset ingestion failures. Each variant is a distinct diagnostic.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("row count mismatch: {file_a} has {rows_a} rows but {file_b} has {rows_b}")]
    RowMismatch {
        file_a: PathBuf,
        rows_a: usize,
        file_b: PathBuf,
        rows_b: usize,
    },

    #[error("non-numeric cell in {file} at line {line}, column {column}: {cell:?}")]
    NonNumeric {
        file: PathBuf,
        line: usize,
        column: usize,
        cell: String,
    },

    #[error("ragged row in {file} at line {line}: expected {expected} columns, got {got}")]
    Ragged {
        file: PathBuf,
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("label {label} at line {line} of {file} is out of range for {num_classes} classes")]
    LabelOutOfRange {
        file: PathBuf,
        line: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("class {class} has {count} samples; at least {required} required")]
    TooFewSamples {
        class: usize,
        count: usize,
        required: usize,
    },

    #[error("malformed dataset: {0}")]
    Malformed(String),
}

impl FamlError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FamlError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        FamlError::Dimension {
            what,
            expected,
            got,
        }
    }
}
