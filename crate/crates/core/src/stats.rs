//! Small statistical helpers shared by the algorithms and the test harness.

use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::rng::Rng;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Standard normal quantile, polished with two Newton steps on the CDF.
pub fn normal_quantile(p: f64) -> f64 {
    let n = Normal::standard();
    let mut x = n.inverse_cdf(p);
    if x.is_finite() {
        for _ in 0..2 {
            let dens = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            if dens > 0.0 {
                x -= (n.cdf(x) - p) / dens;
            }
        }
    }
    x
}

/// Two-sided Clopper–Pearson interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n, "need 0 <= k <= n, n > 0");
    let alpha = 1.0 - confidence;
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(k as f64, (n - k + 1) as f64)
            .expect("beta parameters are positive")
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new((k + 1) as f64, (n - k) as f64)
            .expect("beta parameters are positive")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Monte-Carlo check of a claim "event rate >= `bound`": passes when the
/// 99% Clopper–Pearson interval of the observed rate reaches `bound`.
pub fn rate_at_least(successes: u64, n: u64, bound: f64) -> bool {
    clopper_pearson(successes, n, 0.99).1 >= bound
}

/// Monte-Carlo check of a claim "event rate <= `bound`".
pub fn rate_at_most(events: u64, n: u64, bound: f64) -> bool {
    clopper_pearson(events, n, 0.99).0 <= bound
}

/// Three binomial standard errors at rate `p` over `n` draws.
pub fn binomial_slack(p: f64, n: u64) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Total variation distance between two probability vectors on a shared index set.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Multinomial counts for `n` draws from `probs` (sub-normalized; the
/// leftover mass is an implicit extra outcome that is not returned).
/// Runs in O(len) time regardless of `n` by sequential binomial splitting.
pub fn multinomial(rng: &mut Rng, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut left = n;
    let mut mass: f64 = 1.0;
    for (c, &p) in counts.iter_mut().zip(probs) {
        if left == 0 {
            break;
        }
        if p <= 0.0 {
            continue;
        }
        let frac = if mass <= 0.0 { 1.0 } else { (p / mass).clamp(0.0, 1.0) };
        let k = if frac >= 1.0 {
            left
        } else {
            Binomial::new(left, frac).expect("valid binomial").sample(rng)
        };
        *c = k;
        left -= k;
        mass -= p;
    }
    counts
}

/// Inverse-CDF draw from a cumulative table whose last entry is the total mass.
pub fn sample_cumulative(rng: &mut Rng, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().expect("non-empty table");
    let u = rng.random::<f64>() * total;
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

/// Median of a slice (upper median for even lengths).
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values[values.len() / 2]
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
