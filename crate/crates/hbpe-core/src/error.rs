//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// No observation mask satisfied the training-set diversity requirement.
    #[error(
        "mask diversity unsatisfiable after {retries} draws: best entropy {best_entropy:.4}, \
         required {required_entropy:.4}"
    )]
    DiversityUnsatisfiable {
        retries: usize,
        best_entropy: f64,
        required_entropy: f64,
    },

    /// A metric was requested over an empty evaluation set.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Kernel Gram matrix could not be factorized even after jitter escalation.
    #[error("ill-conditioned kernel matrix (jitter escalated up to {max_jitter:e})")]
    IllConditionedKernel { max_jitter: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The ADMM iterates became non-finite.
    #[error("solver diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("parse error in {path}, row {row}, column {column}: {detail}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        detail: String,
    },

    #[error("fold construction failed: {0}")]
    FoldConstruction(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(
        path: impl Into<PathBuf>,
        row: usize,
        column: &str,
        detail: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            row,
            column: column.to_string(),
            detail: detail.into(),
        }
    }
}
