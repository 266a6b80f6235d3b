use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions do not agree.
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    Shape {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    /// Input outside the domain of an operation (empty sequence, zero window, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The tape was asked for something it cannot do.
    #[error("tape usage error: {0}")]
    Usage(String),

    /// Series with zero variance or a singular regressor matrix.
    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("conflicting records for corridor {corridor} at {timestamp}")]
    Conflict { corridor: String, timestamp: String },

    #[error("training diverged at epoch {epoch} (lr {lr}); last finite loss {last_finite_loss:?}")]
    Divergence {
        epoch: usize,
        lr: f64,
        last_finite_loss: Option<f64>,
    },

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint checksum mismatch: {0}")]
    Checksum(String),

    #[error("tensor `{name}` is {found}, expected {expected}")]
    TensorShape {
        name: String,
        found: String,
        expected: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: impl Into<String>, rhs: impl Into<String>) -> Self {
        Error::Shape {
            op,
            lhs: lhs.into(),
            rhs: rhs.into(),
        }
    }
}
