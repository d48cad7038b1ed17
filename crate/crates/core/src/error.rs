use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the factorization toolkit.
#[derive(Debug, Error)]
pub enum NmfError {
    #[error("dimension mismatch in {op}: expected {expected:?}, got {got:?}")]
    Dimension {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid matrix data: {0}")]
    InvalidMatrix(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: negative entry {value} at ({row}, {col}); NMF input must be nonnegative")]
    NegativeEntry {
        path: PathBuf,
        line: usize,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("active-set solver cycled after {swaps} swaps")]
    NnlsCycling { swaps: usize, best: Vec<f64> },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, NmfError>;

pub(crate) fn dim_err(op: &'static str, expected: (usize, usize), got: (usize, usize)) -> NmfError {
    NmfError::Dimension { op, expected, got }
}
