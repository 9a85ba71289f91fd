//! Spectral statistics of the planted-sign instance A = uuᵀ/d + N.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::labeled_stream;
use crate::spectral::HardInstance;
use crate::stats::{clopper_pearson, rate_at_least};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardStats {
    pub lambda1: f64,
    /// Second eigenvalue in the |λ| ordering, signed.
    pub lambda2: f64,
    /// |⟨v₁, u/√d⟩|
    pub overlap: f64,
    /// Fraction of coordinates where sign(v₁) matches u, after fixing the global sign.
    pub sign_agreement: f64,
    /// ‖G‖ with G = N/σ the standardized noise.
    pub noise_norm: f64,
}

/// Seed of the instance used by trial `trial`.
pub fn instance_seed(master: u64, d: usize, trial: u64) -> u64 {
    labeled_stream(master, &format!("hard-instance/d{d}"), trial).random()
}

/// Eigenvalues from a values-only solve; v₁ by power iteration from the
/// planted vector, which converges in a handful of steps because
/// |λ₂/λ₁| is tiny.
pub fn hard_stats(inst: &HardInstance) -> Result<HardStats> {
    let d = inst.d;
    let a = inst.matrix.as_real().expect("hard instance is real");
    let mut vals: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|x, y| y.abs().total_cmp(&x.abs()).then(y.total_cmp(x)));
    let (lambda1, lambda2) = (vals[0], vals[1]);

    let s = 1.0 / (d as f64).sqrt();
    let u = nalgebra::DVector::from_fn(d, |i, _| inst.u[i] as f64 * s);
    let mut v = u.clone();
    let mut converged = false;
    for _ in 0..200 {
        let mut next = a * &v;
        next /= next.norm();
        let resid = (a * &next - &next * lambda1).norm();
        v = next;
        if resid <= 1e-12 * lambda1.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            residual: (a * &v - &v * lambda1).norm(),
        });
    }
    let dot = v.dot(&u);
    if dot < 0.0 {
        v = -v;
    }
    let agree = (0..d).filter(|&i| (v[i] >= 0.0) == (inst.u[i] > 0)).count();

    let noise = inst.noise();
    let noise_norm = noise.symmetric_eigenvalues().iter().fold(0.0f64, |m, x| m.max(x.abs())) / inst.noise_sigma;
    Ok(HardStats {
        lambda1,
        lambda2,
        overlap: dot.abs(),
        sign_agreement: agree as f64 / d as f64,
        noise_norm,
    })
}

/// The five per-instance claims with the rate each must hold at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardClaim {
    Lambda1,
    Lambda2,
    Overlap,
    SignAgreement,
    NoiseNorm,
}

impl HardClaim {
    pub const ALL: [HardClaim; 5] = [
        HardClaim::Lambda1,
        HardClaim::Lambda2,
        HardClaim::Overlap,
        HardClaim::SignAgreement,
        HardClaim::NoiseNorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HardClaim::Lambda1 => "lambda1_in_band",
            HardClaim::Lambda2 => "lambda2_below_0.08",
            HardClaim::Overlap => "overlap_at_least_0.997",
            HardClaim::SignAgreement => "sign_agreement_at_least_0.994",
            HardClaim::NoiseNorm => "noise_norm_at_most_3sqrt_d",
        }
    }

    pub fn holds(self, s: &HardStats, d: usize) -> bool {
        match self {
            HardClaim::Lambda1 => (0.9985..=1.0015).contains(&s.lambda1),
            HardClaim::Lambda2 => s.lambda2 < 0.08,
            HardClaim::Overlap => s.overlap >= 0.997,
            HardClaim::SignAgreement => s.sign_agreement >= 0.994,
            HardClaim::NoiseNorm => s.noise_norm <= 3.0 * (d as f64).sqrt(),
        }
    }

    pub fn target_rate(self, d: usize) -> f64 {
        match self {
            HardClaim::NoiseNorm => 1.0 - (-0.04 * d as f64).exp(),
            _ => 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimSummary {
    pub claim: HardClaim,
    pub name: String,
    pub holds: u64,
    pub trials: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub target_rate: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

fn quantiles(mut xs: Vec<f64>) -> Quantiles {
    xs.sort_by(f64::total_cmp);
    Quantiles {
        min: xs[0],
        median: xs[xs.len() / 2],
        max: xs[xs.len() - 1],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceReport {
    pub d: usize,
    pub trials: u64,
    pub lambda1: Quantiles,
    pub lambda2: Quantiles,
    pub overlap: Quantiles,
    pub sign_agreement: Quantiles,
    pub noise_norm: Quantiles,
    pub claims: Vec<ClaimSummary>,
    pub pass: bool,
}

/// Aggregates per-trial statistics; each claim passes when the 99%
/// Clopper–Pearson interval of its rate reaches the target.
pub fn summarize(d: usize, stats: &[HardStats]) -> HardInstanceReport {
    let n = stats.len() as u64;
    let claims: Vec<ClaimSummary> = HardClaim::ALL
        .iter()
        .map(|&c| {
            let holds = stats.iter().filter(|s| c.holds(s, d)).count() as u64;
            let (ci_low, ci_high) = clopper_pearson(holds, n, 0.99);
            let target_rate = c.target_rate(d);
            ClaimSummary {
                claim: c,
                name: c.name().to_string(),
                holds,
                trials: n,
                rate: holds as f64 / n as f64,
                ci_low,
                ci_high,
                target_rate,
                pass: rate_at_least(holds, n, target_rate),
            }
        })
        .collect();
    let pick = |f: fn(&HardStats) -> f64| quantiles(stats.iter().map(f).collect());
    HardInstanceReport {
        d,
        trials: n,
        lambda1: pick(|s| s.lambda1),
        lambda2: pick(|s| s.lambda2),
        overlap: pick(|s| s.overlap),
        sign_agreement: pick(|s| s.sign_agreement),
        noise_norm: pick(|s| s.noise_norm),
        pass: claims.iter().all(|c| c.pass),
        claims,
    }
}
