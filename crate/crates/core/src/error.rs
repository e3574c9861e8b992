//! Shared error type for all diagnostic computations.

use thiserror::Error;

/// Errors across the numerics, model, optimizer, bridge, continuous and
/// synthetic modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Empty input or mismatched dimensions between operands.
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// Weight vector that cannot be placed on the simplex: all-zero,
    /// negative, or non-finite entries.
    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    /// A data point has zero evidence under the model; the NLL is infinite
    /// and every downstream quantity is undefined.
    #[error("data point {0} is impossible under the model (log evidence = -inf)")]
    ImpossibleDataPoint(usize),

    /// Optimizer initialization without full support; Blahut-Arimoto cannot
    /// revive a zeroed atom.
    #[error("invalid init: {0}")]
    InvalidInit(String),

    /// A test channel places mass where the distortion is infinite.
    #[error("channel places mass {q} at entry ({row}, {col}) where the log likelihood is -inf")]
    InfiniteDistortion { row: usize, col: usize, q: f64 },

    /// A covariance matrix required to be positive-definite is numerically
    /// singular.
    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    /// Every importance weight underflowed to -inf.
    #[error("importance sampling estimator degenerate: all {0} weights are -inf")]
    EstimatorDegenerate(usize),

    /// A pushforward map cannot be built from the given CDF components.
    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    /// A run parameter violates a module precondition.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Malformed text input, with a 1-based line number for diagnostics.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
