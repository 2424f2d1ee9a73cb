use thiserror::Error;

/// Errors raised by estimation, inference and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A matrix that must be inverted is numerically singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// The solver did not converge and the caller asked for strict handling.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed tabular or configuration input, with location when known.
    #[error("parse error{}: {message}", location_suffix(.row, .column))]
    Parse {
        message: String,
        row: Option<usize>,
        column: Option<String>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn location_suffix(row: &Option<usize>, column: &Option<String>) -> String {
    match (row, column) {
        (Some(r), Some(c)) => format!(" at row {r}, column '{c}'"),
        (Some(r), None) => format!(" at row {r}"),
        (None, Some(c)) => format!(" in column '{c}'"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>, row: Option<usize>, column: Option<&str>) -> Self {
        Error::Parse {
            message: msg.into(),
            row,
            column: column.map(str::to_owned),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}
