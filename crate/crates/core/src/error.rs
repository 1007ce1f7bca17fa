use thiserror::Error;

/// Errors raised by the pricing engines and the benchmark harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PricingError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("explicit step dt = {dt:.6e} exceeds the stable limit dt_max = {dt_max:.6e}")]
    Stability { dt: f64, dt_max: f64 },

    #[error("tridiagonal system is singular: pivot {pivot:.3e} at row {row}")]
    Singular { row: usize, pivot: f64 },

    #[error("quadrature did not converge: estimated error {estimate:.3e} exceeds tolerance {tolerance:.3e}")]
    Quadrature { estimate: f64, tolerance: f64 },
}

impl PricingError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PricingError::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, PricingError>;
