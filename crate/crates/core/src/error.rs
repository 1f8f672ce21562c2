use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown field `{0}`")]
    UnknownField(String),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("linear solver did not converge: {0}")]
    Convergence(String),

    #[error("solution does not decay at the boundary: |u| = {value:.3e} exceeds {limit:.1e}")]
    BoundaryDecay { value: f64, limit: f64 },

    #[error("hermite expansion under-resolved (top-mode fraction {fraction:.3e}); try order {suggested}")]
    HermiteTruncation { fraction: f64, suggested: usize },

    #[error("{flagged} of {total} samples were non-finite")]
    FlaggedSamples { flagged: usize, total: usize },

    #[error("problem too large: {0}")]
    Memory(String),

    #[error("derivative paths disagree: relative difference {0:.3e}")]
    DerivativeMismatch(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
