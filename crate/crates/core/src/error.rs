use thiserror::Error;

/// Errors raised by the forcing model, the solvers and the experiment drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid forcing: {0}")]
    InvalidForcing(String),

    #[error("frequency vector is resonant: k = {k:?} gives |k·nu| = {value:e}")]
    Resonant { k: Vec<i64>, value: f64 },

    #[error("state {value} is not above the threshold {threshold}")]
    BelowThreshold { value: f64, threshold: f64 },

    #[error("root solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("construction failed: {0}")]
    ConstructionFailed(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
