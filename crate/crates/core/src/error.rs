use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument {x} outside the supported domain: {reason}")]
    Domain { x: f64, reason: &'static str },

    #[error("argument {x} is outside the {regime} regime")]
    Regime { x: f64, regime: &'static str },

    #[error("no evaluation regime reached the target accuracy at x = {x}")]
    NonConvergence { x: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite state at step {step}, mode {mode}")]
    NonFiniteState { step: usize, mode: usize },

    #[error("grid has {points} points, at least {required} are required")]
    GridTooCoarse { points: usize, required: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("quadrature error {achieved:e} exceeds tolerance {tol:e}")]
    QuadratureTolerance { achieved: f64, tol: f64 },

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("{0}")]
    InsufficientLevels(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("config: {0}")]
    Config(String),

    #[error("cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error signals a numerical failure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::NonFinite(_)
                | Error::NonFiniteState { .. }
                | Error::QuadratureTolerance { .. }
                | Error::Factorization(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
