//! Domain types shared by every solver: market, contract, grid and results.
//!
//! All types are immutable after construction. Constructors validate the
//! invariants, so a value that exists is a value the solvers may use.

use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};

/// Local volatility profile used by the convection tuning factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AlphaProfile {
    /// alpha(S) = sigma
    #[default]
    Constant,
    /// alpha(S) = sigma * S
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub rate: f64,
    pub sigma: f64,
    #[serde(default)]
    pub alpha_profile: AlphaProfile,
}

impl MarketParams {
    pub fn new(rate: f64, sigma: f64) -> Result<Self> {
        Self::with_profile(rate, sigma, AlphaProfile::Constant)
    }

    pub fn with_profile(rate: f64, sigma: f64, alpha_profile: AlphaProfile) -> Result<Self> {
        let market = MarketParams {
            rate,
            sigma,
            alpha_profile,
        };
        market.validate()?;
        Ok(market)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(PricingError::invalid(format!(
                "rate must be finite and non-negative, got {}",
                self.rate
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(PricingError::invalid(format!(
                "volatility must be finite and positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Local volatility alpha(S). Positive for every S > 0.
    #[inline]
    pub fn alpha(&self, s: f64) -> f64 {
        match self.alpha_profile {
            AlphaProfile::Constant => self.sigma,
            AlphaProfile::Proportional => self.sigma * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl std::fmt::Display for OptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptionKind::Call => f.write_str("call"),
            OptionKind::Put => f.write_str("put"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionContract {
    pub kind: OptionKind,
    pub strike: f64,
    pub maturity: f64,
    pub spot: f64,
}

impl OptionContract {
    pub fn new(kind: OptionKind, strike: f64, maturity: f64, spot: f64) -> Result<Self> {
        let contract = OptionContract {
            kind,
            strike,
            maturity,
            spot,
        };
        contract.validate()?;
        Ok(contract)
    }

    pub fn call(spot: f64, strike: f64, maturity: f64) -> Result<Self> {
        Self::new(OptionKind::Call, strike, maturity, spot)
    }

    pub fn put(spot: f64, strike: f64, maturity: f64) -> Result<Self> {
        Self::new(OptionKind::Put, strike, maturity, spot)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("strike", self.strike),
            ("maturity", self.maturity),
            ("spot", self.spot),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(PricingError::invalid(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Same contract with a different maturity.
    pub fn with_maturity(&self, maturity: f64) -> Result<Self> {
        Self::new(self.kind, self.strike, maturity, self.spot)
    }

    /// Same terms with the opposite call/put flag.
    pub fn mirrored(&self) -> Self {
        let kind = match self.kind {
            OptionKind::Call => OptionKind::Put,
            OptionKind::Put => OptionKind::Call,
        };
        OptionContract { kind, ..*self }
    }

    /// Terminal payoff at underlying price `s`.
    #[inline]
    pub fn payoff(&self, s: f64) -> f64 {
        match self.kind {
            OptionKind::Call => (s - self.strike).max(0.0),
            OptionKind::Put => (self.strike - s).max(0.0),
        }
    }
}

/// Free-function form of [`OptionContract::payoff`].
pub fn payoff(contract: &OptionContract, s: f64) -> f64 {
    contract.payoff(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Lower,
    Upper,
}

/// Dirichlet value at a truncation edge of the price grid, `tau` years before
/// maturity.
///
/// Calls are worthless at S = 0 and behave like `S - K e^{-r tau}` at the upper
/// edge; puts are worth `K e^{-r tau}` at S = 0 and nothing at the upper edge.
pub fn boundary_value(
    contract: &OptionContract,
    market: &MarketParams,
    edge: Edge,
    s_max: f64,
    tau: f64,
) -> Result<f64> {
    // Relative slack absorbs the rounding in tau = step * dt.
    let slack = 1e-12 * contract.maturity.max(1.0);
    if !(tau >= -slack && tau <= contract.maturity + slack) {
        return Err(PricingError::invalid(format!(
            "tau = {tau} outside [0, {}]",
            contract.maturity
        )));
    }
    Ok(boundary_value_unchecked(contract, market, edge, s_max, tau))
}

#[inline]
pub(crate) fn boundary_value_unchecked(
    contract: &OptionContract,
    market: &MarketParams,
    edge: Edge,
    s_max: f64,
    tau: f64,
) -> f64 {
    let discounted_strike = contract.strike * (-market.rate * tau).exp();
    match (contract.kind, edge) {
        (OptionKind::Call, Edge::Lower) => 0.0,
        (OptionKind::Call, Edge::Upper) => (s_max - discounted_strike).max(0.0),
        (OptionKind::Put, Edge::Lower) => discounted_strike,
        (OptionKind::Put, Edge::Upper) => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "policy", content = "value")]
pub enum SMaxPolicy {
    /// 4 * max(spot, strike), nudged so the spot lands on a node.
    #[default]
    Auto,
    Explicit(f64),
}

/// Uniform price/time grid. Nodes sit at `S_i = i * ds`, `i = 0..=n_space`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub s_max: f64,
    pub n_space: usize,
    pub n_time: usize,
    pub ds: f64,
    pub dt: f64,
}

impl Discretization {
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.ds
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_space).map(|i| self.node(i)).collect()
    }

    /// Same price grid with a different time step count.
    pub fn with_n_time(&self, n_time: usize, maturity: f64) -> Result<Self> {
        if n_time < 1 {
            return Err(PricingError::invalid("n_time must be at least 1"));
        }
        Ok(Discretization {
            n_time,
            dt: maturity / n_time as f64,
            ..*self
        })
    }

    /// Linear interpolation of grid values at price `s`.
    pub fn interpolate(&self, values: &[f64], s: f64) -> f64 {
        debug_assert_eq!(values.len(), self.n_space + 1);
        let x = s / self.ds;
        let nearest = x.round();
        if (x - nearest).abs() < 1e-9 && nearest >= 0.0 && (nearest as usize) <= self.n_space {
            return values[nearest as usize];
        }
        let i = (x.floor() as usize).min(self.n_space - 1);
        let w = (s - self.node(i)) / self.ds;
        values[i] * (1.0 - w) + values[i + 1] * w
    }
}

pub const S_MAX_FACTOR: f64 = 4.0;

/// Build the solver grid for a contract.
///
/// With [`SMaxPolicy::Auto`] the nominal upper edge is `4 * max(spot, strike)`;
/// the spacing is then rounded so the spot is exactly the nearest node index,
/// keeping `n_space` intervals. If the rounded edge would no longer exceed
/// both spot and strike the nominal grid is kept.
pub fn build_grid(
    contract: &OptionContract,
    n_space: usize,
    n_time: usize,
    policy: SMaxPolicy,
) -> Result<Discretization> {
    contract.validate()?;
    if n_space < 4 {
        return Err(PricingError::invalid(format!(
            "n_space must be at least 4, got {n_space}"
        )));
    }
    if n_time < 1 {
        return Err(PricingError::invalid("n_time must be at least 1"));
    }
    let floor = contract.spot.max(contract.strike);
    let s_max = match policy {
        SMaxPolicy::Explicit(value) => {
            if !(value.is_finite() && value > floor) {
                return Err(PricingError::invalid(format!(
                    "s_max = {value} must exceed max(spot, strike) = {floor}"
                )));
            }
            value
        }
        SMaxPolicy::Auto => {
            let nominal = S_MAX_FACTOR * floor;
            let ds = nominal / n_space as f64;
            let index = (contract.spot / ds).round().max(1.0);
            let adjusted_ds = contract.spot / index;
            let adjusted = adjusted_ds * n_space as f64;
            if adjusted > floor && (index as usize) < n_space {
                adjusted
            } else {
                nominal
            }
        }
    };
    Ok(Discretization {
        s_max,
        n_space,
        n_time,
        ds: s_max / n_space as f64,
        dt: contract.maturity / n_time as f64,
    })
}

/// Option values on the grid, one column per backward-time level.
///
/// `levels[n][i]` is the value at `S_i` and `tau = n * dt`; level 0 is the
/// payoff and level `n_time` the valuation date.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSurface {
    pub disc: Discretization,
    pub levels: Vec<Vec<f64>>,
}

impl PriceSurface {
    pub fn value(&self, i: usize, n: usize) -> f64 {
        self.levels[n][i]
    }

    pub fn final_level(&self) -> &[f64] {
        self.levels.last().expect("surface has at least the payoff level")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Method {
    #[serde(rename = "MCFDM")]
    Mcfdm,
    #[serde(rename = "CFDM")]
    Cfdm,
    #[serde(rename = "MonteCarlo")]
    MonteCarlo,
    #[serde(rename = "Exact")]
    Exact,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Mcfdm => "MCFDM",
            Method::Cfdm => "CFDM",
            Method::MonteCarlo => "MonteCarlo",
            Method::Exact => "Exact",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = PricingError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcfdm" => Ok(Method::Mcfdm),
            "cfdm" | "cn" | "crank-nicolson" => Ok(Method::Cfdm),
            "montecarlo" | "monte-carlo" | "mc" => Ok(Method::MonteCarlo),
            "exact" => Ok(Method::Exact),
            other => Err(PricingError::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Method-specific metadata attached to a price.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_space: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_time: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cfl_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oscillation: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingResult {
    pub method: Method,
    pub price: f64,
    /// |price - closed form|, when the closed form was evaluated.
    pub abs_error: Option<f64>,
    pub elapsed_seconds: f64,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl PricingResult {
    pub(crate) fn new(method: Method, price: f64, elapsed_seconds: f64) -> Self {
        PricingResult {
            method,
            price,
            abs_error: None,
            elapsed_seconds: elapsed_seconds.max(0.0),
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn with_reference(mut self, exact: f64) -> Self {
        self.abs_error = Some((self.price - exact).abs());
        self
    }
}
