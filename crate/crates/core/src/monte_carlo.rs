//! Log-Euler Monte Carlo baseline.
//!
//! Paths are simulated in fixed blocks of [`BLOCK_SIZE`]. Block `b` draws from
//! ChaCha8 seeded with the job seed on stream `b`, so every path sees the same
//! normals whether blocks run on one thread or many. Block statistics are
//! merged in block order.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::model::{MarketParams, Method, OptionContract, PricingResult};
use crate::oracle::{black_scholes_price, inverse_std_normal_cdf};

pub const BLOCK_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub n_time_steps: usize,
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_paths: 100_000,
            seed: 42,
            n_time_steps: 1,
            antithetic: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 1 {
            return Err(PricingError::invalid("n_paths must be at least 1"));
        }
        if self.n_time_steps < 1 {
            return Err(PricingError::invalid("n_time_steps must be at least 1"));
        }
        Ok(())
    }
}

/// Uniform draw in the open interval (0, 1).
#[inline]
fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal stream for one block of paths.
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64, block: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block);
        NormalStream { rng }
    }
}

impl Iterator for NormalStream {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        Some(inverse_std_normal_cdf(open_uniform(&mut self.rng)))
    }
}

/// Terminal price after `n_steps` log-Euler steps of
/// `S <- S exp((r - sigma^2/2) dt + sigma sqrt(dt) Z)`.
pub fn sample_terminal_price<I: Iterator<Item = f64>>(
    market: &MarketParams,
    s0: f64,
    t_total: f64,
    n_steps: usize,
    normals: &mut I,
) -> f64 {
    let dt = t_total / n_steps as f64;
    let drift = (market.rate - 0.5 * market.sigma * market.sigma) * dt;
    let vol = market.sigma * dt.sqrt();
    let mut s = s0;
    for _ in 0..n_steps {
        let z = normals.next().expect("normal stream is infinite");
        s *= (drift + vol * z).exp();
    }
    s
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * self.count as f64 * other.count as f64 / count as f64;
        Moments { count, mean, m2 }
    }
}

fn validate_market(market: &MarketParams) -> Result<()> {
    if !(market.rate.is_finite() && market.rate >= 0.0) {
        return Err(PricingError::invalid("rate must be finite and non-negative"));
    }
    if !(market.sigma.is_finite() && market.sigma >= 0.0) {
        return Err(PricingError::invalid("volatility must be finite and non-negative"));
    }
    Ok(())
}

/// Discounted mean of `f(S_T)` with its standard error. The error is `None`
/// for a single sample.
pub fn price_monte_carlo_with_payoff<F>(
    market: &MarketParams,
    spot: f64,
    maturity: f64,
    config: &McConfig,
    f: F,
) -> Result<(f64, Option<f64>)>
where
    F: Fn(f64) -> f64 + Sync,
{
    config.validate()?;
    validate_market(market)?;
    if !(spot > 0.0 && maturity > 0.0) {
        return Err(PricingError::invalid("spot and maturity must be positive"));
    }

    // With antithetic pairs each sample averages the payoffs of Z and -Z.
    let samples = if config.antithetic {
        config.n_paths.div_ceil(2)
    } else {
        config.n_paths
    };
    let blocks = samples.div_ceil(BLOCK_SIZE);
    let steps = config.n_time_steps;

    let simulate_block = |b: usize| -> Moments {
        let mut normals = NormalStream::new(config.seed, b as u64);
        let mut moments = Moments::default();
        let count = BLOCK_SIZE.min(samples - b * BLOCK_SIZE);
        let mut draws = vec![0.0; steps];
        for _ in 0..count {
            for z in draws.iter_mut() {
                *z = normals.next().unwrap();
            }
            let x = f(sample_terminal_price(market, spot, maturity, steps, &mut draws.iter().copied()));
            let x = if config.antithetic {
                let mirrored = sample_terminal_price(
                    market,
                    spot,
                    maturity,
                    steps,
                    &mut draws.iter().map(|z| -z),
                );
                0.5 * (x + f(mirrored))
            } else {
                x
            };
            moments.push(x);
        }
        moments
    };

    let per_block: Vec<Moments> = (0..blocks).into_par_iter().map(simulate_block).collect();
    let total = per_block.into_iter().fold(Moments::default(), Moments::merge);

    let discount = (-market.rate * maturity).exp();
    let price = discount * total.mean;
    let std_error = (total.count > 1).then(|| {
        let variance = total.m2 / (total.count - 1) as f64;
        discount * (variance / total.count as f64).sqrt()
    });
    Ok((price, std_error))
}

/// Monte Carlo price of a European option.
pub fn price_monte_carlo(
    contract: &OptionContract,
    market: &MarketParams,
    config: &McConfig,
) -> Result<PricingResult> {
    contract.validate()?;
    let start = Instant::now();
    let (price, std_error) = price_monte_carlo_with_payoff(
        market,
        contract.spot,
        contract.maturity,
        config,
        |s| contract.payoff(s),
    )?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut result = PricingResult::new(Method::MonteCarlo, price, elapsed);
    if market.sigma > 0.0 {
        result = result.with_reference(black_scholes_price(contract, market));
    } else {
        let forward = contract.spot * (market.rate * contract.maturity).exp();
        result = result.with_reference((-market.rate * contract.maturity).exp() * contract.payoff(forward));
    }
    result.diagnostics.std_error = std_error;
    result.diagnostics.paths = Some(config.n_paths);
    result.diagnostics.seed = Some(config.seed);
    Ok(result)
}
