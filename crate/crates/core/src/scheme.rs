//! Mean convection finite difference method (MCFDM).
//!
//! Explicit Euler in backward time on the Black-Scholes equation written in
//! convection-diffusion form,
//!
//! ```text
//! V^{n+1}_i = V^n_i + dt * ( 1/2 sigma^2 S_i^2 (V_{i+1} - 2 V_i + V_{i-1}) / dS^2
//!                          + r S_i theta_i (Phi_{i+1/2} - Phi_{i-1/2}) / dS
//!                          - r V_i )
//! ```
//!
//! where `Phi_{i+1/2} = (V_i + V_{i+1}) / 2` and `theta_i` comes from the
//! cell integral of `1 / alpha(S)` around `S_i`. In normalized mode `theta_i`
//! is divided by its constant-volatility value, so `theta = 1` everywhere for
//! a flat profile and `scaling` becomes a plain enhance/weaken multiplier.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::model::{
    boundary_value_unchecked, Discretization, Edge, MarketParams, Method, OptionContract,
    PriceSurface, PricingResult,
};
use crate::oracle::black_scholes_price;

/// Tolerance of the per-step discrete maximum principle check.
pub const OSCILLATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaConfig {
    /// Multiplier on theta. 1 is neutral, > 1 enhances and < 1 weakens the
    /// convection term; 0 switches it off.
    pub scaling: f64,
    /// Subintervals of the composite rule used for the cell integral.
    pub quadrature_points: usize,
    /// Divide theta by its constant-alpha reference `alpha(s) / (2 ds)`.
    pub normalize: bool,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        ThetaConfig {
            scaling: 1.0,
            quadrature_points: 64,
            normalize: true,
        }
    }
}

impl ThetaConfig {
    pub fn with_scaling(scaling: f64) -> Self {
        ThetaConfig {
            scaling,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scaling.is_finite() && self.scaling >= 0.0) {
            return Err(PricingError::invalid(format!(
                "theta scaling must be finite and non-negative, got {}",
                self.scaling
            )));
        }
        if self.quadrature_points < 2 {
            return Err(PricingError::invalid(
                "theta quadrature needs at least 2 points",
            ));
        }
        Ok(())
    }
}

/// Composite Simpson rule for the integral of `1 / alpha` over a cell.
///
/// The panel count is `quadrature_points`, rounded up to even.
fn inverse_alpha_integral(market: &MarketParams, lo: f64, hi: f64, points: usize) -> Result<f64> {
    let panels = points + points % 2;
    let h = (hi - lo) / panels as f64;
    let mut sum = 0.0;
    for j in 0..=panels {
        let s = lo + j as f64 * h;
        let a = market.alpha(s);
        if !(a > 0.0 && a.is_finite()) {
            return Err(PricingError::invalid(format!(
                "alpha({s}) = {a} is not positive on the theta cell"
            )));
        }
        let w = if j == 0 || j == panels {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w / a;
    }
    Ok(sum * h / 3.0)
}

/// Convection tuning factor at node `s` for spacing `ds`.
///
/// Literal value: `(ds / 2) * (1 / ds) * (integral_{s-ds/2}^{s+ds/2} 1/alpha)^{-1}`.
pub fn theta_at(market: &MarketParams, s: f64, ds: f64, config: &ThetaConfig) -> Result<f64> {
    config.validate()?;
    if !(ds > 0.0 && ds.is_finite()) {
        return Err(PricingError::invalid(format!("ds must be positive, got {ds}")));
    }
    let lo = s - 0.5 * ds;
    let hi = s + 0.5 * ds;
    if lo <= 0.0 {
        return Err(PricingError::invalid(format!(
            "theta cell [{lo}, {hi}] extends below S = 0"
        )));
    }
    let integral = inverse_alpha_integral(market, lo, hi, config.quadrature_points)?;
    let literal = 0.5 * ds * ((1.0 / ds) / integral);
    let base = if config.normalize {
        literal / (market.alpha(s) / (2.0 * ds))
    } else {
        literal
    };
    Ok(base * config.scaling)
}

/// Theta at every interior node of the grid (boundary entries are zero).
pub fn theta_profile(market: &MarketParams, disc: &Discretization, config: &ThetaConfig) -> Result<Vec<f64>> {
    let mut thetas = vec![0.0; disc.n_space + 1];
    for (i, theta) in thetas.iter_mut().enumerate().take(disc.n_space).skip(1) {
        *theta = theta_at(market, disc.node(i), disc.ds, config)?;
    }
    Ok(thetas)
}

/// `theta * (Phi_{i+1/2} - Phi_{i-1/2})` with averaged face fluxes, which
/// telescopes to `theta * (v_{i+1} - v_{i-1}) / 2`.
#[inline]
pub fn convection_flux_difference(v: [f64; 3], theta: f64) -> f64 {
    let [prev, mid, next] = v;
    let face_up = 0.5 * (mid + next);
    let face_down = 0.5 * (prev + mid);
    theta * (face_up - face_down)
}

/// One interior node of the explicit update.
#[inline]
pub fn stencil_update(
    v: [f64; 3],
    s: f64,
    theta: f64,
    market: &MarketParams,
    ds: f64,
    dt: f64,
) -> f64 {
    let diffusion = 0.5 * market.sigma * market.sigma * s * s / (ds * ds);
    let convection = market.rate * s * theta / ds;
    update_with(v, diffusion, Some(convection), market.rate, dt)
}

// The only place the update formula lives. `convection = None` drops the
// term from the sum entirely.
#[inline(always)]
fn update_with(v: [f64; 3], diffusion: f64, convection: Option<f64>, rate: f64, dt: f64) -> f64 {
    let [prev, mid, next] = v;
    let mut rhs = diffusion * (next - 2.0 * mid + prev);
    if let Some(c) = convection {
        rhs += c * convection_flux_difference(v, 1.0);
    }
    rhs -= rate * mid;
    mid + dt * rhs
}

/// Precomputed per-node coefficients for a solve.
struct Stencil {
    diffusion: Vec<f64>,
    convection: Option<Vec<f64>>,
    rate: f64,
}

impl Stencil {
    fn new(market: &MarketParams, disc: &Discretization, thetas: Option<&[f64]>) -> Self {
        let half_var = 0.5 * market.sigma * market.sigma;
        let ds2 = disc.ds * disc.ds;
        let diffusion = (0..=disc.n_space)
            .map(|i| {
                let s = disc.node(i);
                half_var * s * s / ds2
            })
            .collect();
        let convection = thetas.map(|th| {
            (0..=disc.n_space)
                .map(|i| market.rate * disc.node(i) * th[i] / disc.ds)
                .collect()
        });
        Stencil {
            diffusion,
            convection,
            rate: market.rate,
        }
    }

    /// Writes level `n + 1` into `out`; returns true if any interior node left
    /// the local max-principle envelope.
    fn step(&self, level: &[f64], out: &mut [f64], dt: f64) -> bool {
        let n = level.len() - 1;
        let shrink = 1.0 - self.rate * dt;
        let mut oscillation = false;
        for i in 1..n {
            let v = [level[i - 1], level[i], level[i + 1]];
            let conv = self.convection.as_ref().map(|c| c[i]);
            let new = update_with(v, self.diffusion[i], conv, self.rate, dt);
            let hi = v[0].max(v[1]).max(v[2]);
            let lo = v[0].min(v[1]).min(v[2]);
            if new > hi + OSCILLATION_TOLERANCE || new < shrink * lo - OSCILLATION_TOLERANCE {
                oscillation = true;
            }
            out[i] = new;
        }
        oscillation
    }
}

fn apply_boundaries(
    out: &mut [f64],
    contract: &OptionContract,
    market: &MarketParams,
    disc: &Discretization,
    tau: f64,
) {
    let n = out.len() - 1;
    out[0] = boundary_value_unchecked(contract, market, Edge::Lower, disc.s_max, tau);
    out[n] = boundary_value_unchecked(contract, market, Edge::Upper, disc.s_max, tau);
}

/// Advance one backward-time level: interior nodes by the stencil, edges by
/// the boundary values at `tau_new`.
pub fn explicit_step(
    level: &[f64],
    contract: &OptionContract,
    market: &MarketParams,
    disc: &Discretization,
    config: &ThetaConfig,
    tau_new: f64,
) -> Result<Vec<f64>> {
    if level.len() != disc.n_space + 1 {
        return Err(PricingError::invalid(format!(
            "level has {} values, grid has {} nodes",
            level.len(),
            disc.n_space + 1
        )));
    }
    let thetas = theta_profile(market, disc, config)?;
    let stencil = Stencil::new(market, disc, Some(&thetas));
    let mut out = vec![0.0; level.len()];
    stencil.step(level, &mut out, disc.dt);
    apply_boundaries(&mut out, contract, market, disc, tau_new);
    Ok(out)
}

/// Largest stable explicit step on this grid; `f64::INFINITY` when nothing
/// constrains it.
pub fn max_stable_dt(market: &MarketParams, disc: &Discretization, config: &ThetaConfig) -> Result<f64> {
    let thetas = theta_profile(market, disc, config)?;
    Ok(max_stable_dt_from(market, disc, &thetas))
}

fn max_stable_dt_from(market: &MarketParams, disc: &Discretization, thetas: &[f64]) -> f64 {
    let ds = disc.ds;
    let var = market.sigma * market.sigma;
    let mut dt_max = f64::INFINITY;
    for (i, theta) in thetas.iter().enumerate().take(disc.n_space).skip(1) {
        let s = disc.node(i);
        let denom = var * s * s + market.rate * s * theta.abs() * ds + market.rate * ds * ds;
        if denom > 0.0 {
            dt_max = dt_max.min(ds * ds / denom);
        }
    }
    dt_max
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveOptions {
    /// March even when dt exceeds the stability limit.
    pub allow_unstable: bool,
    /// Keep every time level in the report.
    pub keep_surface: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McfdmReport {
    pub result: PricingResult,
    /// Theta per node; the two edge entries are zero.
    pub thetas: Vec<f64>,
    /// `dt_max / dt`; values below 1 mean the run was unstable.
    pub cfl_margin: f64,
    /// Some step broke the local max-principle envelope.
    pub oscillation: bool,
    pub final_level: Vec<f64>,
    pub surface: Option<PriceSurface>,
}

/// Price a European option with the MCFDM scheme.
pub fn solve_mcfdm(
    contract: &OptionContract,
    market: &MarketParams,
    disc: &Discretization,
    config: &ThetaConfig,
    options: SolveOptions,
) -> Result<McfdmReport> {
    contract.validate()?;
    market.validate()?;
    config.validate()?;
    march(contract, market, disc, Some(config), options)
}

/// The same march with the convection term removed from the stencil.
pub fn solve_diffusion_reaction(
    contract: &OptionContract,
    market: &MarketParams,
    disc: &Discretization,
    options: SolveOptions,
) -> Result<McfdmReport> {
    contract.validate()?;
    market.validate()?;
    march(contract, market, disc, None, options)
}

fn march(
    contract: &OptionContract,
    market: &MarketParams,
    disc: &Discretization,
    config: Option<&ThetaConfig>,
    options: SolveOptions,
) -> Result<McfdmReport> {
    let start = Instant::now();

    let thetas = match config {
        Some(cfg) => theta_profile(market, disc, cfg)?,
        None => vec![0.0; disc.n_space + 1],
    };
    let dt_max = max_stable_dt_from(market, disc, &thetas);
    let cfl_margin = dt_max / disc.dt;
    if disc.dt > dt_max && !options.allow_unstable {
        return Err(PricingError::Stability {
            dt: disc.dt,
            dt_max,
        });
    }

    let stencil = Stencil::new(market, disc, config.map(|_| thetas.as_slice()));
    let mut level: Vec<f64> = disc.nodes().iter().map(|&s| contract.payoff(s)).collect();
    let mut next = vec![0.0; level.len()];
    let mut surface = options.keep_surface.then(|| {
        let mut levels = Vec::with_capacity(disc.n_time + 1);
        levels.push(level.clone());
        levels
    });
    let mut oscillation = false;

    for n in 1..=disc.n_time {
        let tau = (n as f64 * disc.dt).min(contract.maturity);
        oscillation |= stencil.step(&level, &mut next, disc.dt);
        apply_boundaries(&mut next, contract, market, disc, tau);
        std::mem::swap(&mut level, &mut next);
        if let Some(levels) = surface.as_mut() {
            levels.push(level.clone());
        }
    }

    let price = disc.interpolate(&level, contract.spot);
    let elapsed = start.elapsed().as_secs_f64();

    let mut result =
        PricingResult::new(Method::Mcfdm, price, elapsed).with_reference(black_scholes_price(contract, market));
    let d = &mut result.diagnostics;
    d.theta_scale = Some(config.map_or(0.0, |c| c.scaling));
    d.n_space = Some(disc.n_space);
    d.n_time = Some(disc.n_time);
    d.s_max = Some(disc.s_max);
    d.cfl_margin = Some(cfl_margin);
    d.oscillation = Some(oscillation);

    Ok(McfdmReport {
        result,
        thetas,
        cfl_margin,
        oscillation,
        final_level: level,
        surface: surface.map(|levels| PriceSurface {
            disc: *disc,
            levels,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, AlphaProfile, SMaxPolicy};

    fn market() -> MarketParams {
        MarketParams::new(0.05, 0.25).unwrap()
    }

    fn literal() -> ThetaConfig {
        ThetaConfig {
            normalize: false,
            ..Default::default()
        }
    }

    #[test]
    fn theta_constant_literal() {
        let th = theta_at(&market(), 3.0, 0.1, &literal()).unwrap();
        assert!((th - 1.25).abs() < 1e-12);
    }

    #[test]
    fn theta_constant_normalized_is_one() {
        for (s, ds) in [(0.5, 0.2), (3.0, 0.1), (25.0, 1.5)] {
            let th = theta_at(&market(), s, ds, &ThetaConfig::default()).unwrap();
            assert!((th - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_proportional_literal_matches_log_antiderivative() {
        let m = MarketParams::with_profile(0.05, 0.25, AlphaProfile::Proportional).unwrap();
        let th = theta_at(&m, 5.0, 0.1, &literal()).unwrap();
        assert!((th - 6.249_791_661_110_82).abs() < 1e-9, "{th}");
    }

    #[test]
    fn theta_rejects_cell_below_zero() {
        assert!(theta_at(&market(), 0.04, 0.1, &ThetaConfig::default()).is_err());
        let bad = ThetaConfig {
            quadrature_points: 1,
            ..Default::default()
        };
        assert!(theta_at(&market(), 3.0, 0.1, &bad).is_err());
        assert!(theta_at(&market(), 3.0, 0.1, &ThetaConfig::with_scaling(-1.0)).is_err());
    }

    #[test]
    fn flux_difference_examples() {
        assert_eq!(convection_flux_difference([1.0, 1.0, 1.0], 1.0), 0.0);
        assert_eq!(convection_flux_difference([0.0, 1.0, 2.0], 1.0), 1.0);
        assert_eq!(convection_flux_difference([0.0, 1.0, 2.0], 2.5), 2.5);
    }

    #[test]
    fn toy_stencil_value() {
        // 0.5 + 0.01 * (0.78125 * 0.5 + 0.25 * 1.5 / 2 - 0.025)
        let v = stencil_update([0.0, 0.5, 1.5], 5.0, 1.0, &market(), 1.0, 0.01);
        assert!((v - 0.505_531_25).abs() < 1e-15);
    }

    #[test]
    fn zero_dt_step_is_identity_in_the_interior() {
        let c = OptionContract::call(7.0, 7.5, 1.0).unwrap();
        let mut g = build_grid(&c, 50, 100, SMaxPolicy::Explicit(30.0)).unwrap();
        g.dt = 0.0;
        let level: Vec<f64> = g.nodes().iter().map(|&s| c.payoff(s)).collect();
        let out = explicit_step(&level, &c, &market(), &g, &ThetaConfig::default(), 0.0).unwrap();
        assert_eq!(out, level);
    }

    #[test]
    fn single_step_from_payoff_stays_non_negative() {
        let c = OptionContract::call(7.0, 7.5, 1.0).unwrap();
        let g = build_grid(&c, 100, 1000, SMaxPolicy::Explicit(30.0)).unwrap();
        let level: Vec<f64> = g.nodes().iter().map(|&s| c.payoff(s)).collect();
        let out = explicit_step(&level, &c, &market(), &g, &ThetaConfig::default(), g.dt).unwrap();
        assert!(out.iter().all(|&v| v >= 0.0));
        let k = 25; // S = 7.5
        assert!(out[k] <= 0.5 * (level[k - 1] + level[k + 1]) + 0.05 * 7.5 * g.dt);
    }

    #[test]
    fn step_rejects_wrong_length() {
        let c = OptionContract::call(7.0, 7.5, 1.0).unwrap();
        let g = build_grid(&c, 50, 100, SMaxPolicy::Auto).unwrap();
        assert!(explicit_step(&[0.0; 3], &c, &market(), &g, &ThetaConfig::default(), 0.01).is_err());
    }

    #[test]
    fn linear_field_is_reproduced() {
        let c = OptionContract::call(7.0, 7.5, 1.0).unwrap();
        let g = build_grid(&c, 40, 1000, SMaxPolicy::Explicit(30.0)).unwrap();
        let (a, b) = (0.7, -1.3);
        let level: Vec<f64> = g.nodes().iter().map(|&s| a * s + b).collect();
        let out = explicit_step(&level, &c, &market(), &g, &ThetaConfig::default(), g.dt).unwrap();
        for i in 1..g.n_space {
            let s = g.node(i);
            let expected = g.dt * (0.05 * s * a - 0.05 * (a * s + b)) + level[i];
            assert!((out[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn stable_dt_matches_worst_node_formula() {
        let c = OptionContract::call(5.0, 5.5, 1.0).unwrap();
        let g = build_grid(&c, 100, 1000, SMaxPolicy::Explicit(22.0)).unwrap();
        let dt_max = max_stable_dt(&market(), &g, &ThetaConfig::default()).unwrap();
        assert!((dt_max - 0.001_619_269_304_726_242).abs() < 1e-15, "{dt_max}");
    }

    #[test]
    fn stable_dt_unconstrained_and_scaling() {
        let c = OptionContract::call(5.0, 5.5, 1.0).unwrap();
        let g = build_grid(&c, 100, 1000, SMaxPolicy::Explicit(22.0)).unwrap();
        let flat = MarketParams::new(0.0, 1e-200).unwrap();
        assert_eq!(
            max_stable_dt(&flat, &g, &ThetaConfig::default()).unwrap(),
            f64::INFINITY
        );

        let fine = build_grid(&c, 200, 1000, SMaxPolicy::Explicit(22.0)).unwrap();
        let coarse = max_stable_dt(&market(), &g, &ThetaConfig::default()).unwrap();
        let finer = max_stable_dt(&market(), &fine, &ThetaConfig::default()).unwrap();
        let ratio = coarse / finer;
        assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn stability_violation_is_rejected() {
        let c = OptionContract::call(7.0, 7.5, 1.0).unwrap();
        let g = build_grid(&c, 100, 100, SMaxPolicy::Auto).unwrap();
        let err = solve_mcfdm(&c, &market(), &g, &ThetaConfig::default(), SolveOptions::default())
            .unwrap_err();
        match err {
            PricingError::Stability { dt, dt_max } => assert!(dt > dt_max),
            other => panic!("unexpected {other:?}"),
        }
        let forced = solve_mcfdm(
            &c,
            &market(),
            &g,
            &ThetaConfig::default(),
            SolveOptions {
                allow_unstable: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(forced.cfl_margin < 1.0);
    }

    #[test]
    fn surface_levels_are_non_negative() {
        let c = OptionContract::put(7.0, 7.5, 0.5).unwrap();
        let g = build_grid(&c, 60, 400, SMaxPolicy::Auto).unwrap();
        let rep = solve_mcfdm(
            &c,
            &market(),
            &g,
            &ThetaConfig::default(),
            SolveOptions {
                keep_surface: true,
                ..Default::default()
            },
        )
        .unwrap();
        let surface = rep.surface.unwrap();
        assert_eq!(surface.levels.len(), g.n_time + 1);
        assert!(surface.levels.iter().all(|l| l.len() == g.n_space + 1));
        assert!(surface.levels.iter().flatten().all(|&v| v >= 0.0));
        assert_eq!(surface.final_level(), rep.final_level.as_slice());
        assert!(!rep.oscillation);
    }

    #[test]
    fn put_matches_closed_form() {
        let c = OptionContract::put(7.0, 7.5, 0.5).unwrap();
        let g = build_grid(&c, 100, 1000, SMaxPolicy::Auto).unwrap();
        let rep = solve_mcfdm(&c, &market(), &g, &ThetaConfig::default(), SolveOptions::default()).unwrap();
        assert!((rep.result.price - 0.677_009_548_497_376_6).abs() < 5e-3);
    }

    proptest::proptest! {
        #[test]
        fn theta_scaling_is_linear(k in 0.0f64..50.0, s in 1.0f64..30.0, ds in 0.01f64..0.5, prop in proptest::bool::ANY) {
            let profile = if prop { AlphaProfile::Proportional } else { AlphaProfile::Constant };
            let m = MarketParams::with_profile(0.05, 0.25, profile).unwrap();
            let unit = theta_at(&m, s, ds, &ThetaConfig::default()).unwrap();
            let scaled = theta_at(&m, s, ds, &ThetaConfig::with_scaling(k)).unwrap();
            proptest::prop_assert_eq!(scaled, k * unit);
        }

        #[test]
        fn theta_constant_identity(points in 2usize..200, s in 1.0f64..30.0, ds in 0.01f64..0.5, sigma in 0.05f64..1.0) {
            let m = MarketParams::new(0.05, sigma).unwrap();
            let cfg = ThetaConfig { quadrature_points: points, normalize: false, scaling: 1.0 };
            let th = theta_at(&m, s, ds, &cfg).unwrap();
            proptest::prop_assert!((th - sigma / (2.0 * ds)).abs() <= 1e-12 * (sigma / (2.0 * ds)).max(1.0));
        }
    }
}
