//! Crank-Nicolson baseline ("CFDM").
//!
//! Central differences in price, trapezoidal averaging in time, one Thomas
//! solve per step. Boundary values at both time levels are folded into the
//! right-hand side.

use std::time::Instant;

use crate::error::{PricingError, Result};
use crate::model::{
    boundary_value_unchecked, Discretization, Edge, MarketParams, Method, OptionContract,
    PricingResult,
};
use crate::oracle::black_scholes_price;

/// Banded form of a tridiagonal system `A x = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>, rhs: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || lower.len() + 1 != n || upper.len() + 1 != n || rhs.len() != n {
            return Err(PricingError::invalid(format!(
                "inconsistent bands: lower {}, diag {}, upper {}, rhs {}",
                lower.len(),
                n,
                upper.len(),
                rhs.len()
            )));
        }
        Ok(TridiagonalSystem {
            lower,
            diag,
            upper,
            rhs,
        })
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.upper[i] * x[i + 1];
                }
                y
            })
            .collect()
    }
}

pub fn thomas_solve(system: &TridiagonalSystem) -> Result<Vec<f64>> {
    let n = system.diag.len();
    let mut scratch = vec![0.0; n];
    let mut x = vec![0.0; n];
    thomas_into(
        &system.lower,
        &system.diag,
        &system.upper,
        &system.rhs,
        &mut scratch,
        &mut x,
    )?;
    Ok(x)
}

/// Thomas elimination without allocation. `scratch` holds the modified upper
/// band; both buffers must have the length of `diag`.
fn thomas_into(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    scratch: &mut [f64],
    x: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    let scale = diag
        .iter()
        .chain(lower)
        .chain(upper)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);

    let mut pivot = diag[0];
    if pivot.abs() < tiny {
        return Err(PricingError::Singular { row: 0, pivot });
    }
    scratch[0] = if n > 1 { upper[0] / pivot } else { 0.0 };
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i - 1] * scratch[i - 1];
        if pivot.abs() < tiny {
            return Err(PricingError::Singular { row: i, pivot });
        }
        if i + 1 < n {
            scratch[i] = upper[i] / pivot;
        }
        x[i] = (rhs[i] - lower[i - 1] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= scratch[i] * x[i + 1];
    }
    Ok(())
}

/// Price a European option with Crank-Nicolson on the given grid.
pub fn solve_crank_nicolson(
    contract: &OptionContract,
    market: &MarketParams,
    disc: &Discretization,
) -> Result<PricingResult> {
    contract.validate()?;
    market.validate()?;
    let (price, elapsed) = {
        let start = Instant::now();
        let level = march(contract, market, disc)?;
        let price = disc.interpolate(&level, contract.spot);
        (price, start.elapsed().as_secs_f64())
    };
    let mut result = PricingResult::new(Method::Cfdm, price, elapsed)
        .with_reference(black_scholes_price(contract, market));
    result.diagnostics.n_space = Some(disc.n_space);
    result.diagnostics.n_time = Some(disc.n_time);
    result.diagnostics.s_max = Some(disc.s_max);
    Ok(result)
}

/// Values at the valuation date on every node.
pub fn crank_nicolson_level(
    contract: &OptionContract,
    market: &MarketParams,
    disc: &Discretization,
) -> Result<Vec<f64>> {
    contract.validate()?;
    market.validate()?;
    march(contract, market, disc)
}

fn march(contract: &OptionContract, market: &MarketParams, disc: &Discretization) -> Result<Vec<f64>> {
    let n = disc.n_space;
    let m = n - 1; // interior unknowns, nodes 1..n-1
    let dt = disc.dt;
    let half_dt = 0.5 * dt;
    let var = market.sigma * market.sigma;
    let r = market.rate;

    // Spatial operator L V_i = a_i V_{i-1} + b_i V_i + c_i V_{i+1}.
    let mut a = vec![0.0; n + 1];
    let mut b = vec![0.0; n + 1];
    let mut c = vec![0.0; n + 1];
    for i in 1..n {
        let s = disc.node(i);
        let diff = 0.5 * var * s * s / (disc.ds * disc.ds);
        let conv = 0.5 * r * s / disc.ds;
        a[i] = diff - conv;
        b[i] = -2.0 * diff - r;
        c[i] = diff + conv;
    }

    let lower: Vec<f64> = (2..n).map(|i| -half_dt * a[i]).collect();
    let diag: Vec<f64> = (1..n).map(|i| 1.0 - half_dt * b[i]).collect();
    let upper: Vec<f64> = (1..n - 1).map(|i| -half_dt * c[i]).collect();

    let mut level: Vec<f64> = disc.nodes().iter().map(|&s| contract.payoff(s)).collect();
    let mut rhs = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut x = vec![0.0; m];

    for step in 1..=disc.n_time {
        let tau = (step as f64 * dt).min(contract.maturity);
        let lo_new = boundary_value_unchecked(contract, market, Edge::Lower, disc.s_max, tau);
        let hi_new = boundary_value_unchecked(contract, market, Edge::Upper, disc.s_max, tau);

        for i in 1..n {
            rhs[i - 1] = level[i]
                + half_dt * (a[i] * level[i - 1] + b[i] * level[i] + c[i] * level[i + 1]);
        }
        rhs[0] += half_dt * a[1] * lo_new;
        rhs[m - 1] += half_dt * c[n - 1] * hi_new;

        thomas_into(&lower, &diag, &upper, &rhs, &mut scratch, &mut x)?;
        level[1..n].copy_from_slice(&x);
        level[0] = lo_new;
        level[n] = hi_new;
    }
    Ok(level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, SMaxPolicy};
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn uniform(rng: &mut ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_dominant(n: usize, seed: u64) -> TridiagonalSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lower: Vec<f64> = (0..n - 1).map(|_| uniform(&mut rng) * 2.0 - 1.0).collect();
        let upper: Vec<f64> = (0..n - 1).map(|_| uniform(&mut rng) * 2.0 - 1.0).collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let off = if i > 0 { lower[i - 1].abs() } else { 0.0 }
                    + if i + 1 < n { upper[i].abs() } else { 0.0 };
                off + 0.5 + uniform(&mut rng)
            })
            .collect();
        let rhs: Vec<f64> = (0..n).map(|_| uniform(&mut rng) * 10.0 - 5.0).collect();
        TridiagonalSystem::new(lower, diag, upper, rhs).unwrap()
    }

    #[test]
    fn identity_system() {
        let b = vec![3.0, -1.0, 0.5, 7.0];
        let sys = TridiagonalSystem::new(vec![0.0; 3], vec![1.0; 4], vec![0.0; 3], b.clone()).unwrap();
        assert_eq!(thomas_solve(&sys).unwrap(), b);
    }

    #[test]
    fn three_by_three() {
        let sys = TridiagonalSystem::new(
            vec![-1.0, -1.0],
            vec![2.0, 2.0, 2.0],
            vec![-1.0, -1.0],
            vec![1.0, 0.0, 1.0],
        )
        .unwrap();
        let x = thomas_solve(&sys).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_unknown() {
        let sys = TridiagonalSystem::new(vec![], vec![4.0], vec![], vec![2.0]).unwrap();
        assert_eq!(thomas_solve(&sys).unwrap(), vec![0.5]);
    }

    #[test]
    fn random_dominant_residual() {
        for seed in 0..20 {
            let sys = random_dominant(50, seed);
            let x = thomas_solve(&sys).unwrap();
            let ax = sys.apply(&x);
            let bmax = sys.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let res = ax.iter().zip(&sys.rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(res <= 1e-10 * (1.0 + bmax));
        }
    }

    #[test]
    fn singular_and_malformed_systems() {
        let sys = TridiagonalSystem::new(vec![1.0], vec![1.0, 1.0], vec![1.0], vec![1.0, 2.0]).unwrap();
        assert!(matches!(thomas_solve(&sys), Err(PricingError::Singular { row: 1, .. })));
        let sys = TridiagonalSystem::new(vec![1.0], vec![0.0, 1.0], vec![1.0], vec![1.0, 2.0]).unwrap();
        assert!(matches!(thomas_solve(&sys), Err(PricingError::Singular { row: 0, .. })));
        assert!(TridiagonalSystem::new(vec![1.0, 2.0], vec![1.0, 1.0], vec![1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn degenerate_maturity_returns_payoff() {
        let m = MarketParams::new(0.05, 0.25).unwrap();
        for c in [
            OptionContract::call(7.0, 6.5, 1e-12).unwrap(),
            OptionContract::put(7.0, 7.5, 1e-12).unwrap(),
        ] {
            let g = build_grid(&c, 100, 1, SMaxPolicy::Auto).unwrap();
            let res = solve_crank_nicolson(&c, &m, &g).unwrap();
            assert!((res.price - c.payoff(c.spot)).abs() < 1e-9);
        }
    }

    #[test]
    fn put_call_parity_at_defaults() {
        let m = MarketParams::new(0.05, 0.25).unwrap();
        let c = OptionContract::call(7.0, 7.5, 1.0).unwrap();
        let g = build_grid(&c, 100, 1000, SMaxPolicy::Auto).unwrap();
        let call = solve_crank_nicolson(&c, &m, &g).unwrap();
        let put = solve_crank_nicolson(&c.mirrored(), &m, &g).unwrap();
        let defect = call.price - put.price - (7.0 - 7.5 * (-0.05f64).exp());
        assert!(defect.abs() <= 1e-2);
        assert!(call.abs_error.unwrap() <= 1e-2);
    }

    proptest::proptest! {
        #[test]
        fn solve_then_multiply_round_trip(n in 1usize..80, seed in 0u64..1000) {
            let sys = if n == 1 {
                TridiagonalSystem::new(vec![], vec![2.0], vec![], vec![seed as f64]).unwrap()
            } else {
                random_dominant(n, seed)
            };
            let x = thomas_solve(&sys).unwrap();
            let b = sys.apply(&x);
            for (got, want) in b.iter().zip(&sys.rhs) {
                proptest::prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
            }
        }
    }
}
