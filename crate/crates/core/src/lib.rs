//! European option pricing with the mean convection finite difference method
//! (MCFDM), plus Crank-Nicolson and Monte Carlo baselines scored against the
//! closed-form Black-Scholes price.

pub mod bench;
pub mod crank_nicolson;
pub mod error;
pub mod scheme;
pub mod model;
pub mod monte_carlo;
pub mod oracle;

pub use error::{PricingError, Result};
pub use model::{
    build_grid, AlphaProfile, Discretization, MarketParams, Method, OptionContract, OptionKind,
    PricingResult, SMaxPolicy,
};
