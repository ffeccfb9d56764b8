use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("zero-norm vector under cosine distance")]
    ZeroNorm,

    #[error("empty batch")]
    EmptyBatch,

    #[error("label {label} outside mean-field bank of {classes} classes")]
    LabelOutsideBank { label: usize, classes: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("forward cache is stale (model changed since forward)")]
    StaleCache,

    #[error("optimizer state not initialized for group {0}")]
    UninitializedState(String),

    #[error("class {0} has no samples")]
    MissingClass(usize),

    #[error("{0}")]
    Data(String),

    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
