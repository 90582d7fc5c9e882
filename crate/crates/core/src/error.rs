use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    /// Malformed file content. `record` is the zero-based record index when
    /// the problem is attributable to a single record.
    #[error("{}{reason}", .record.map(|r| format!("record {r}: ")).unwrap_or_default())]
    Format { record: Option<usize>, reason: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn format(reason: impl Into<String>) -> Self {
        Error::Format {
            record: None,
            reason: reason.into(),
        }
    }

    pub fn record(record: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            record: Some(record),
            reason: reason.into(),
        }
    }

    pub fn invalid(reason: impl Into<String>) -> Self {
        Error::Invalid(reason.into())
    }

    pub fn shape(what: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            what,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for failures that stem from the numbers themselves (divergence,
    /// non-finite values, failed gradient checks) rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}
