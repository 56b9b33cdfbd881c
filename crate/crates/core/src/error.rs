//! Crate-wide error type.

use std::fmt;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by data ingest, model math, metrics, and the run harness.
#[derive(Debug)]
pub enum Error {
    /// A cell could not be ingested; identifies the offending row and column.
    Ingest {
        row: usize,
        column: String,
        message: String,
    },
    /// An input had the wrong shape (length/dimension mismatch).
    Shape { context: String },
    /// An operation was called in a state its contract forbids.
    Contract { context: String },
    /// An operation received an empty input it cannot work with.
    EmptyInput { context: String },
    /// A config field failed validation; `field` is the flat config path.
    Config { field: String, message: String },
    /// A metric was requested for an accuracy-matrix cell that was never set.
    MissingCell { experience: usize, evaluated_on: usize },
    /// AUROC is undefined because the evaluation split holds a single class.
    AurocUndefined,
    /// A numeric quantity became non-finite; `index` locates the entry.
    NonFinite { index: usize, context: String },
    /// A training run aborted; the diagnostic snapshot (if any) is at `snapshot`.
    RunAborted {
        message: String,
        snapshot: Option<String>,
    },
    Io(std::io::Error),
    Csv(csv::Error),
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Ingest {
                row,
                column,
                message,
            } => write!(f, "ingest error at row {row}, column '{column}': {message}"),
            Error::Shape { context } => write!(f, "shape mismatch: {context}"),
            Error::Contract { context } => write!(f, "contract violation: {context}"),
            Error::EmptyInput { context } => write!(f, "empty input: {context}"),
            Error::Config { field, message } => {
                write!(f, "invalid config field '{field}': {message}")
            }
            Error::MissingCell {
                experience,
                evaluated_on,
            } => write!(
                f,
                "accuracy matrix cell (experience {experience}, evaluated on {evaluated_on}) was never recorded"
            ),
            Error::AurocUndefined => {
                write!(f, "AUROC is undefined: evaluation split holds a single class")
            }
            Error::NonFinite { index, context } => {
                write!(f, "non-finite value at index {index}: {context}")
            }
            Error::RunAborted { message, snapshot } => match snapshot {
                Some(path) => write!(f, "run aborted: {message} (diagnostic snapshot: {path})"),
                None => write!(f, "run aborted: {message}"),
            },
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Csv(e) => write!(f, "csv error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Csv(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

impl Error {
    pub(crate) fn contract(context: impl Into<String>) -> Self {
        Error::Contract {
            context: context.into(),
        }
    }

    pub(crate) fn shape(context: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
        }
    }

    pub(crate) fn empty(context: impl Into<String>) -> Self {
        Error::EmptyInput {
            context: context.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
