//! Crate-wide error type.

/// Errors produced while assembling models, building reduced spaces,
/// training surrogates or reading persisted artifacts.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Incompatible shapes between operands (state/parameter/basis sizes).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A direct factorization failed (exactly or numerically singular matrix).
    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    /// Requested basis size exceeds the numerical rank of the snapshot data.
    #[error("rank deficient data: requested {requested} columns but numerical rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },

    /// A full-order trajectory needed as ground truth or training data diverged.
    #[error("high-dimensional model diverged at parameter {param:?} (step {step})")]
    HdmDiverged { param: Vec<f64>, step: usize },

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Training aborted on a non-finite loss.
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    /// Interpolation point selection hit an exactly dependent column.
    #[error("interpolation point selection failed: {0}")]
    PointSelection(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed or incompatible persisted artifact.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
