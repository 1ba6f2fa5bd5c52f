use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("{op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("adjacency slice {slice} is not symmetric (max |A - A^T| = {max_dev:e})")]
    Asymmetric { slice: usize, max_dev: f64 },

    #[error("structural adjacency slice {slice} has a negative entry ({value}) at ({row}, {col})")]
    NegativeEntry {
        slice: usize,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("eigensolver failed to converge at frequency {frequency}")]
    EigenFailure { frequency: usize },

    #[error("eigenvector matrix at frequency {frequency} is singular")]
    SingularBasis { frequency: usize },

    #[error("backward called with a stale or mismatched cache: {0}")]
    StaleCache(&'static str),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite value in loss term `{term}` (epoch {epoch}, batch {batch})")]
    NonFinite {
        term: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("group too small for a two-sample test: {group} has {size} matrices (need >= 2)")]
    GroupTooSmall { group: &'static str, size: usize },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed file {}: {detail}", path.display())]
    Malformed { path: PathBuf, detail: String },

    #[error("subject `{subject}` violates invariant `{invariant}`: {detail}")]
    InvariantViolation {
        subject: String,
        invariant: &'static str,
        detail: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse category used by the command-line driver to pick an exit code.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::EigenFailure { .. } | Error::SingularBasis { .. } | Error::NonFinite { .. } => {
                ErrorCategory::Numerical
            }
            Error::Io { .. } => ErrorCategory::Io,
            _ => ErrorCategory::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Numerical,
    Io,
}
