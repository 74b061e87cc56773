use thiserror::Error;

/// Errors produced by the beam-model toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("all mixture components vanish for row {row} (z = {z}, z* = {z_star})")]
    ZeroNormalizer { row: usize, z: f64, z_star: f64 },

    #[error("series diverges for ratio e = {0} (requires 0 <= e < 1)")]
    DivergentSeries(f64),

    #[error("bin edges differ between distributions")]
    EdgeMismatch,

    #[error("bin edges must contain at least two strictly increasing values")]
    InvalidEdges,

    #[error("cannot build a histogram from an empty sample")]
    EmptySamples,

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("covariance factorization failed after diagonal jitter")]
    Factorization,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
