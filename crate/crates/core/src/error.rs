use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{0} requires a square matrix, got {1}x{2}")]
    NotSquare(&'static str, usize, usize),

    #[error("dense conversion of {rows}x{cols} exceeds the oracle budget of {budget} entries")]
    OracleBudget {
        rows: usize,
        cols: usize,
        budget: usize,
    },

    #[error("matrix not SPD: non-positive pivot {value:e} at index {index}")]
    NotSpd { index: usize, value: f64 },

    #[error("incomplete factorization broke down at index {index} after all diagonal shifts")]
    IncompleteBreakdown { index: usize },

    #[error("non-positive entry {value:e} at index {index} in {what}")]
    NonPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{block}-side inner solver failed: {source}")]
    Block {
        block: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed matrix market data at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn dims(op: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { op, expected, got }
    }

    pub(crate) fn in_block(self, block: &'static str) -> Self {
        Error::Block {
            block,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
