use thiserror::Error;

/// Errors raised by the pricing engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A structural parameter invariant is broken (sign, dimension).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Parameters are structurally valid but violate an inward-drift condition.
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Moment sequence cannot come from a density on the positive half-line.
    #[error("infeasible moments: {0}")]
    Infeasible(String),

    /// An iterative solver did not converge.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e}): {context}")]
    Convergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    /// Non-finite values or a singular system.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Malformed input data (configs, market files).
    #[error("data error: {0}")]
    Data(String),

    /// Calibration could not find a feasible point.
    #[error("calibration failed: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, Error>;
