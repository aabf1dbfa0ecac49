use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse law specification `{0}` (expected pq:p=.., gauss:sigma=.. or unif:hw=..)")]
    LawSpec(String),

    #[error("no window n <= {cap} has both tails strictly inside (0,1)")]
    NoWindow { cap: usize },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("root bracket failed: {0}")]
    Bracket(String),

    #[error("mean return time is infinite outside the localized phase")]
    InfiniteMean,

    #[error("kernel is defective: row {row} has mass {mass}")]
    DefectiveKernel { row: usize, mass: f64 },

    #[error("zero total weight: {0}")]
    ZeroWeight(String),

    #[error("rejection sampler stalled: {0}")]
    RejectionStall(String),

    #[error("cache file: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
