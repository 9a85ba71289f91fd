//! One-row distinguishing problem: decide the sign of a mean ±1/d from m
//! Gaussian samples of variance F/(4·10⁶ d).
//!
//! At F = 1 the sample budget for 70% success is far below one sample, so
//! the Monte-Carlo curve runs at an amplified variance factor F; the budget
//! then scales as F·d and the closed form covers F = 1.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::labeled_stream;
use crate::stats::{normal_cdf, normal_quantile, ols_slope};

/// Target success probability defining m*.
pub const TARGET_SUCCESS: f64 = 0.7;

/// Per-sample standard deviation at variance factor `factor`.
pub fn sample_sigma(d: usize, factor: f64) -> f64 {
    (factor / (4.0e6 * d as f64)).sqrt()
}

/// KL(N(1/d, σ²) ‖ N(−1/d, σ²)) = (2/d)²/(2σ²).
pub fn kl_divergence(d: usize, factor: f64) -> f64 {
    let mu = 1.0 / d as f64;
    let var = factor / (4.0e6 * d as f64);
    (mu - (-mu)).powi(2) / (2.0 * var)
}

/// Success of the sign-of-mean test: Φ(√m·(1/d)/σ).
pub fn exact_success(d: usize, m: f64, factor: f64) -> f64 {
    normal_cdf(m.sqrt() / d as f64 / sample_sigma(d, factor))
}

/// Continuous budget at which the exact success reaches 0.7.
pub fn exact_m_star(d: usize, factor: f64) -> f64 {
    let z = normal_quantile(TARGET_SUCCESS);
    (z * sample_sigma(d, factor) * d as f64).powi(2)
}

/// TV between the two m-fold products, exactly: 2Φ(√m/(dσ)) − 1.
pub fn exact_tv(d: usize, m: f64, factor: f64) -> f64 {
    2.0 * exact_success(d, m, factor) - 1.0
}

pub fn pinsker_bound(d: usize, m: f64, factor: f64) -> f64 {
    (m * kl_divergence(d, factor) / 2.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m: u64,
    pub exact: f64,
    pub empirical: f64,
    /// Binomial standard error at the exact rate.
    pub std_error: f64,
    pub within_3se: bool,
    /// 2p̂ − 1, the TV estimate implied by the optimal test.
    pub tv_empirical: f64,
    pub pinsker: f64,
    pub pinsker_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguishCurve {
    pub d: usize,
    pub trials: u64,
    pub variance_factor: f64,
    pub kl: f64,
    pub kl_unamplified: f64,
    pub m_star_exact: f64,
    pub m_star_unamplified: f64,
    pub m_star_empirical: Option<f64>,
    pub points: Vec<CurvePoint>,
}

/// One sign test: draw the sign, then m samples, and guess the sign of
/// their sum (a fair coin on ties and at m = 0).
fn one_trial(rng: &mut crate::rng::Rng, m: u64, mu: f64, sigma: f64) -> bool {
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut sum = 0.0;
    for _ in 0..m {
        let z: f64 = rng.sample(StandardNormal);
        sum += sign * mu + sigma * z;
    }
    let guess = if sum > 0.0 {
        1.0
    } else if sum < 0.0 {
        -1.0
    } else if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    };
    guess == sign
}

/// Empirical success at each budget in `m_grid`, one RNG stream per
/// (d, m) so the curve does not depend on scheduling.
pub fn lb_distinguish_curve(d: usize, m_grid: &[u64], trials: u64, factor: f64, seed: u64) -> DistinguishCurve {
    let mu = 1.0 / d as f64;
    let sigma = sample_sigma(d, factor);
    let points: Vec<CurvePoint> = m_grid
        .par_iter()
        .map(|&m| {
            let mut rng = labeled_stream(seed, &format!("lower-bound/d{d}"), m);
            let wins = (0..trials).filter(|_| one_trial(&mut rng, m, mu, sigma)).count() as u64;
            let empirical = wins as f64 / trials as f64;
            let exact = exact_success(d, m as f64, factor);
            let std_error = (exact * (1.0 - exact) / trials as f64).sqrt();
            let tv_empirical = 2.0 * empirical - 1.0;
            let pinsker = pinsker_bound(d, m as f64, factor);
            CurvePoint {
                m,
                exact,
                empirical,
                std_error,
                within_3se: (empirical - exact).abs() <= 3.0 * std_error,
                tv_empirical,
                pinsker,
                pinsker_ok: tv_empirical <= pinsker + 6.0 * std_error,
            }
        })
        .collect();
    DistinguishCurve {
        d,
        trials,
        variance_factor: factor,
        kl: kl_divergence(d, factor),
        kl_unamplified: kl_divergence(d, 1.0),
        m_star_exact: exact_m_star(d, factor),
        m_star_unamplified: exact_m_star(d, 1.0),
        m_star_empirical: empirical_m_star(&points),
        points,
    }
}

/// Linear interpolation of the first crossing of 0.7 on the empirical curve.
pub fn empirical_m_star(points: &[CurvePoint]) -> Option<f64> {
    let mut sorted: Vec<&CurvePoint> = points.iter().collect();
    sorted.sort_by_key(|p| p.m);
    let k = sorted.iter().position(|p| p.empirical >= TARGET_SUCCESS)?;
    if k == 0 {
        return Some(sorted[0].m as f64);
    }
    let (a, b) = (sorted[k - 1], sorted[k]);
    let t = (TARGET_SUCCESS - a.empirical) / (b.empirical - a.empirical);
    Some(a.m as f64 + t * (b.m - a.m) as f64)
}

/// Slope of log m* against log d.
pub fn scaling_slope(dims: &[usize], m_star: &[f64]) -> f64 {
    let x: Vec<f64> = dims.iter().map(|&d| (d as f64).ln()).collect();
    let y: Vec<f64> = m_star.iter().map(|m| m.ln()).collect();
    ols_slope(&x, &y)
}
