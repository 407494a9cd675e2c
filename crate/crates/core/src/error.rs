use thiserror::Error;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("degenerate projection: smallest singular value {sigma_min:e} below tolerance")]
    DegenerateProjection { sigma_min: f64 },

    #[error("special-orthogonal projection is not unique (gap {gap:e})")]
    NonUniqueProjection { gap: f64 },

    #[error("logarithm undefined: rotation angle is pi (branch ambiguity)")]
    BranchAmbiguity,

    #[error("logarithm undefined: determinant {0} is not +1")]
    WrongComponent(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigengap {gap:e} too small for a stable spectral estimate")]
    EigengapTooSmall { gap: f64 },

    #[error("non-finite objective at iteration {0}")]
    NonFinite(usize),

    #[error("ground truth required for {0}")]
    MissingTruth(&'static str),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SyncError>;
