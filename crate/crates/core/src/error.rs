use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the simulation and uncertainty-propagation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },

    #[error("averaging window has {points} point(s), need at least 2")]
    EmptyWindow { points: usize },

    #[error("series too short for the 0-1 test: {len} < {min}")]
    TooShort { len: usize, min: usize },

    #[error("density integrates to {integral}, expected 1")]
    NotNormalized { integral: f64 },

    #[error("bad support [{a}, {b}]: lower bound must be below upper bound")]
    BadSupport { a: f64, b: f64 },

    #[error("nominal value is zero; supply an absolute half-width")]
    ZeroNominal,

    #[error("{value} lies outside the support [{a}, {b}]")]
    OutOfSupport { value: f64, a: f64, b: f64 },

    #[error("underdetermined fit: {samples} samples, need at least {required}")]
    Underdetermined { samples: usize, required: usize },

    #[error("design matrix is ill-conditioned (condition {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate spread: sample standard deviation is zero")]
    DegenerateSpread,

    #[error("empty input")]
    EmptyInput,

    #[error("too few samples: {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("no sample satisfies the conditioning event")]
    EmptyEvent,

    #[error("ensemble members have mismatched time grids")]
    GridMismatch,

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("malformed document: {0}")]
    Format(String),
}

impl Error {
    /// Numerical failures (as opposed to bad input or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::DegenerateSpread
                | Error::EmptyEvent
                | Error::Underdetermined { .. }
                | Error::NotNormalized { .. }
        )
    }
}
