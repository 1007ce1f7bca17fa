//! Closed-form Black-Scholes prices and an independent quadrature check.
//!
//! The closed form is the "exact" reference every numerical method is scored
//! against. [`risk_neutral_integral_price`] recomputes the same number by
//! integrating the discounted payoff against the lognormal terminal density,
//! without touching the normal CDF.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::model::{MarketParams, OptionContract, OptionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CdfMethod {
    /// `0.5 * erfc(-x / sqrt(2))`, accurate to a few ulps.
    #[default]
    ErfBased,
    /// Hart's double precision rational approximation (as published by West).
    RationalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub cdf_method: CdfMethod,
    pub quadrature_tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            cdf_method: CdfMethod::ErfBased,
            quadrature_tolerance: 1e-10,
        }
    }
}

/// Standard normal CDF.
///
/// Only the lower tail is evaluated directly; the upper half is `1 - N(-x)`,
/// so `N(x) + N(-x) = 1` holds to one rounding.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    std_normal_cdf_with(x, CdfMethod::ErfBased)
}

pub fn std_normal_cdf_with(x: f64, method: CdfMethod) -> Result<f64> {
    if !x.is_finite() {
        return Err(PricingError::invalid(format!(
            "normal CDF needs a finite argument, got {x}"
        )));
    }
    Ok(norm_cdf(x, method))
}

#[inline]
pub(crate) fn norm_cdf(x: f64, method: CdfMethod) -> f64 {
    let tail = |z: f64| match method {
        CdfMethod::ErfBased => 0.5 * libm::erfc(-z * FRAC_1_SQRT_2),
        CdfMethod::RationalApprox => hart_lower_tail(z),
    };
    if x <= 0.0 {
        tail(x)
    } else {
        1.0 - tail(-x)
    }
}

/// Lower tail N(x) for x <= 0.
fn hart_lower_tail(x: f64) -> f64 {
    let a = x.abs();
    if a > 37.0 {
        return 0.0;
    }
    let e = (-a * a / 2.0).exp();
    if a < 7.071_067_811_865_47 {
        let num = ((((((3.526_249_659_989_11e-2 * a + 0.700_383_064_443_688) * a
            + 6.373_962_203_531_65)
            * a
            + 33.912_866_078_383)
            * a
            + 112.079_291_497_871)
            * a
            + 221.213_596_169_931)
            * a
            + 220.206_867_912_376)
            * e;
        let den = ((((((8.838_834_764_831_84e-2 * a + 1.755_667_163_182_64) * a
            + 16.064_177_579_207)
            * a
            + 86.780_732_202_946_1)
            * a
            + 296.564_248_779_674)
            * a
            + 637.333_633_378_831)
            * a
            + 793.826_512_519_948)
            * a
            + 440.413_735_824_752;
        num / den
    } else {
        let b = a + 0.65;
        let b = a + 4.0 / b;
        let b = a + 3.0 / b;
        let b = a + 2.0 / b;
        let b = a + 1.0 / b;
        e / b / 2.506_628_274_631
    }
}

/// Inverse standard normal CDF for `p` in (0, 1).
///
/// Acklam's rational starting point followed by one Halley step against the
/// erfc-based CDF, which brings the result to near machine precision.
pub fn inverse_std_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement. Work with the smaller tail to keep relative accuracy.
    let e = if x <= 0.0 {
        norm_cdf(x, CdfMethod::ErfBased) - p
    } else {
        (1.0 - p) - norm_cdf(-x, CdfMethod::ErfBased)
    };
    let u = e * (2.0 * PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Closed-form European price under geometric Brownian motion.
pub fn black_scholes_price(contract: &OptionContract, market: &MarketParams) -> f64 {
    black_scholes_price_with(contract, market, CdfMethod::ErfBased)
}

pub fn black_scholes_price_with(
    contract: &OptionContract,
    market: &MarketParams,
    cdf: CdfMethod,
) -> f64 {
    let OptionContract {
        kind,
        strike,
        maturity,
        spot,
    } = *contract;
    let vol_sqrt_t = market.sigma * maturity.sqrt();
    let d1 = ((spot / strike).ln() + (market.rate + 0.5 * market.sigma * market.sigma) * maturity)
        / vol_sqrt_t;
    let d2 = d1 - vol_sqrt_t;
    let discounted_strike = strike * (-market.rate * maturity).exp();
    match kind {
        OptionKind::Call => spot * norm_cdf(d1, cdf) - discounted_strike * norm_cdf(d2, cdf),
        OptionKind::Put => discounted_strike * norm_cdf(-d2, cdf) - spot * norm_cdf(-d1, cdf),
    }
}

/// Discounted risk-neutral expectation of the payoff by adaptive quadrature.
///
/// The expectation is taken over the standard normal driver `z` of
/// `S_T = S0 exp((r - sigma^2/2) T + sigma sqrt(T) z)`, split at the payoff
/// kink and truncated at |z| = 12.
pub fn risk_neutral_integral_price(
    contract: &OptionContract,
    market: &MarketParams,
    tolerance: f64,
) -> Result<f64> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(PricingError::invalid("quadrature tolerance must be positive"));
    }
    discounted_expectation(
        market,
        contract.spot,
        contract.maturity,
        |s| contract.payoff(s),
        Some(contract.strike),
        tolerance,
    )
}

/// Discounted expectation of an arbitrary terminal function `f(S_T)`.
pub fn discounted_expectation<F: Fn(f64) -> f64>(
    market: &MarketParams,
    spot: f64,
    maturity: f64,
    f: F,
    kink: Option<f64>,
    tolerance: f64,
) -> Result<f64> {
    const Z_MAX: f64 = 12.0;
    let drift = (market.rate - 0.5 * market.sigma * market.sigma) * maturity;
    let vol = market.sigma * maturity.sqrt();
    let inv_sqrt_2pi = 1.0 / (2.0 * PI).sqrt();
    let integrand = |z: f64| f(spot * (drift + vol * z).exp()) * (-0.5 * z * z).exp() * inv_sqrt_2pi;

    let mut breaks = vec![-Z_MAX, 0.0, Z_MAX];
    if let Some(k) = kink {
        let z_star = ((k / spot).ln() - drift) / vol;
        if z_star.is_finite() && z_star.abs() < Z_MAX {
            breaks.push(z_star);
        }
    }
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();

    let pieces = (breaks.len() - 1) as f64;
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += adaptive_gauss_kronrod(&integrand, w[0], w[1], tolerance / pieces, 0)?;
    }
    Ok((-market.rate * maturity).exp() * total)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
// Gauss weights for the odd-indexed Kronrod nodes and the centre.
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let centre = 0.5 * (a + b);
    let fc = f(centre);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = G_WEIGHTS[3] * fc;
    for j in 0..7 {
        let dx = half * GK_NODES[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += GK_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += G_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adaptive_gauss_kronrod<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tolerance: f64,
    depth: u32,
) -> Result<f64> {
    let (value, estimate) = gauss_kronrod_15(f, a, b);
    if estimate <= tolerance {
        return Ok(value);
    }
    if depth >= 40 {
        return Err(PricingError::Quadrature {
            estimate,
            tolerance,
        });
    }
    let mid = 0.5 * (a + b);
    Ok(adaptive_gauss_kronrod(f, a, mid, 0.5 * tolerance, depth + 1)?
        + adaptive_gauss_kronrod(f, mid, b, 0.5 * tolerance, depth + 1)?)
}
