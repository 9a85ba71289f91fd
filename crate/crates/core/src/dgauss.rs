//! Discrete Gaussian distributions on shifted lattices λℤ + c: exact pmf
//! tables, samplers, MGF-based sub-Gaussian certificates and the
//! truncated/modular state-closeness oracle.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, regime, Error, Result};
use crate::rng::Rng;
use crate::spectral::C64;

/// p_s(x) = exp(−πx²/s²).
pub fn rho(s: f64, x: f64) -> f64 {
    debug_assert!(s > 0.0);
    (-std::f64::consts::PI * x * x / (s * s)).exp()
}

/// Σ_{k∈ℤ} p_s(spacing·k), summed outward until terms vanish.
pub fn lattice_gaussian_sum(s: f64, spacing: f64) -> f64 {
    let mut total = 1.0;
    let mut k = 1.0;
    loop {
        let term = rho(s, spacing * k);
        total += 2.0 * term;
        if term < 1e-18 * total {
            return total;
        }
        k += 1.0;
    }
}

/// Support variant of a discrete Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Variant {
    Full,
    /// Lattice points restricted to [−l, r].
    Truncated {
        l: f64,
        r: f64,
    },
    /// Lattice indices folded mod n into {−n/2, …, n/2 − 1}.
    Modular {
        n: u64,
    },
}

/// Distribution over points λk + c, k ∈ ℤ, with weight p_s(λk + c).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteGaussianSpec {
    pub c: f64,
    pub s: f64,
    pub variant: Variant,
    #[serde(default = "one")]
    pub lattice: f64,
}

fn one() -> f64 {
    1.0
}

impl DiscreteGaussianSpec {
    pub fn full(c: f64, s: f64) -> Self {
        DiscreteGaussianSpec {
            c,
            s,
            variant: Variant::Full,
            lattice: 1.0,
        }
    }

    pub fn truncated(c: f64, s: f64, l: f64, r: f64) -> Self {
        DiscreteGaussianSpec {
            c,
            s,
            variant: Variant::Truncated { l, r },
            lattice: 1.0,
        }
    }

    pub fn modular(c: f64, s: f64, n: u64) -> Self {
        DiscreteGaussianSpec {
            c,
            s,
            variant: Variant::Modular { n },
            lattice: 1.0,
        }
    }

    pub fn with_lattice(mut self, lattice: f64) -> Self {
        self.lattice = lattice;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(invalid("width s must be positive"));
        }
        if !(self.lattice > 0.0 && self.lattice.is_finite()) || !self.c.is_finite() {
            return Err(invalid("lattice scale must be positive and shift finite"));
        }
        match self.variant {
            Variant::Full => {}
            Variant::Truncated { l, r } => {
                if !(l >= 0.0 && r >= 0.0) {
                    return Err(invalid("truncation bounds L, R must be non-negative"));
                }
            }
            Variant::Modular { n } => {
                if n == 0 || n % 2 == 1 {
                    return Err(invalid("modulus N must be even and positive"));
                }
            }
        }
        Ok(())
    }

    /// The lattice point with index k.
    pub fn point(&self, k: i64) -> f64 {
        self.lattice * k as f64 + self.c
    }

    /// Index window outside which every weight is below e^{−16π}.
    fn window(&self) -> (i64, i64) {
        let center = (-self.c / self.lattice).round() as i64;
        let half = (4.0 * self.s / self.lattice).ceil() as i64 + 2;
        (center - half, center + half)
    }
}

/// Exact pmf table with inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct PmfTable {
    spec: DiscreteGaussianSpec,
    ks: Vec<i64>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl PmfTable {
    pub fn build(spec: &DiscreteGaussianSpec) -> Result<Self> {
        spec.validate()?;
        let (lo, hi) = spec.window();
        let mut acc: BTreeMap<i64, f64> = BTreeMap::new();
        for k in lo..=hi {
            let x = spec.point(k);
            let w = rho(spec.s, x);
            match spec.variant {
                Variant::Full => {
                    acc.insert(k, w);
                }
                Variant::Truncated { l, r } => {
                    if x >= -l && x <= r {
                        acc.insert(k, w);
                    }
                }
                Variant::Modular { n } => {
                    let n = n as i64;
                    let folded = (k + n / 2).rem_euclid(n) - n / 2;
                    *acc.entry(folded).or_insert(0.0) += w;
                }
            }
        }
        let total: f64 = acc.values().sum();
        if total <= 0.0 {
            return Err(Error::Degenerate("support carries no mass".into()));
        }
        let mut ks = Vec::with_capacity(acc.len());
        let mut probs = Vec::with_capacity(acc.len());
        for (k, w) in acc {
            ks.push(k);
            probs.push(w / total);
        }
        let mut cdf = Vec::with_capacity(probs.len());
        let mut run = 0.0;
        for p in &probs {
            run += p;
            cdf.push(run);
        }
        Ok(PmfTable {
            spec: *spec,
            ks,
            probs,
            cdf,
        })
    }

    pub fn spec(&self) -> &DiscreteGaussianSpec {
        &self.spec
    }

    /// Probability of index k (0 off the support).
    pub fn pmf(&self, k: i64) -> f64 {
        match self.ks.binary_search(&k) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    /// (index, probability) pairs with non-zero mass, in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.ks.iter().copied().zip(self.probs.iter().copied())
    }

    /// Value of the random variable at index k: λk + c.
    pub fn value(&self, k: i64) -> f64 {
        self.spec.point(k)
    }

    pub fn sample(&self, rng: &mut Rng) -> i64 {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let i = self.cdf.partition_point(|&c| c <= u);
        self.ks[i.min(self.ks.len() - 1)]
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(k, p)| p * self.value(k)).sum()
    }

    /// ln E[e^{tX}] by log-sum-exp.
    pub fn log_mgf(&self, t: f64) -> f64 {
        let terms: Vec<f64> = self
            .iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|(k, p)| p.ln() + t * self.value(k))
            .collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    }
}

/// Probability of index k under `spec`.
pub fn pmf(spec: &DiscreteGaussianSpec, k: i64) -> Result<f64> {
    Ok(PmfTable::build(spec)?.pmf(k))
}

/// One draw of the lattice index; builds the table each call.
pub fn sample(spec: &DiscreteGaussianSpec, rng: &mut Rng) -> Result<i64> {
    Ok(PmfTable::build(spec)?.sample(rng))
}

/// Outcome of an MGF scan against τ-subG(α²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubGaussianCertificate {
    pub tau: f64,
    pub alpha: f64,
    /// max over the grid of ln E[e^{tX}] − (τ + α²t²/2).
    pub mgf_margin: f64,
    pub worst_t: f64,
}

impl SubGaussianCertificate {
    pub fn valid(&self) -> bool {
        self.mgf_margin <= 1e-9
    }
}

/// 64 log-spaced magnitudes in [10⁻³/α, 5/α].
pub fn default_t_grid(alpha: f64) -> Vec<f64> {
    let (lo, hi) = ((1e-3 / alpha).ln(), (5.0 / alpha).ln());
    (0..64).map(|i| (lo + (hi - lo) * i as f64 / 63.0).exp()).collect()
}

/// Scans ±t over the grid (default grid when `t_grid` is None).
pub fn check_subgaussian(table: &PmfTable, alpha: f64, tau: f64, t_grid: Option<&[f64]>) -> SubGaussianCertificate {
    let owned;
    let grid = match t_grid {
        Some(g) => g,
        None => {
            owned = default_t_grid(alpha);
            &owned
        }
    };
    let mut margin = f64::NEG_INFINITY;
    let mut worst = 0.0;
    for &t in grid {
        for t in [t, -t] {
            let m = table.log_mgf(t) - (tau + alpha * alpha * t * t / 2.0);
            if m > margin {
                margin = m;
                worst = t;
            }
        }
    }
    SubGaussianCertificate {
        tau,
        alpha,
        mgf_margin: margin,
        worst_t: worst,
    }
}

/// The width condition s ≥ λ√(log₂(12/τ)/π) under which 𝒟_{λℤ+c,s} is τ-subG(s²).
pub fn meets_subgaussian_hypothesis(s: f64, lattice: f64, tau: f64) -> bool {
    s >= lattice * ((12.0 / tau).log2() / std::f64::consts::PI).sqrt()
}

/// Exact total variation between two variants sharing (c, s, λ).
pub fn variant_tv_distance(a: &DiscreteGaussianSpec, b: &DiscreteGaussianSpec) -> Result<f64> {
    if a.c != b.c || a.s != b.s || a.lattice != b.lattice {
        return Err(Error::Mismatch("variants must share shift, width and lattice".into()));
    }
    let ta = PmfTable::build(a)?;
    let tb = PmfTable::build(b)?;
    let mut keys: Vec<i64> = ta.ks.iter().chain(tb.ks.iter()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    Ok(keys.iter().map(|&k| (ta.pmf(k) - tb.pmf(k)).abs()).sum::<f64>() / 2.0)
}

/// Pairwise ℓ₂ distances between the full, truncated and modular Gaussian states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateCloseness {
    pub full_vs_truncated: f64,
    pub full_vs_modular: f64,
    pub truncated_vs_modular: f64,
}

impl StateCloseness {
    pub fn max(&self) -> f64 {
        self.full_vs_truncated
            .max(self.full_vs_modular)
            .max(self.truncated_vs_modular)
    }
}

/// Builds |G⟩, |G^tr⟩, |G^mod⟩ with amplitudes f(x+t)p_s(x+t) on a common
/// integer window and returns their pairwise distances.
pub fn gaussian_state_closeness(
    s: f64,
    n: u64,
    t: f64,
    delta: f64,
    phase: &dyn Fn(f64) -> C64,
) -> Result<StateCloseness> {
    if !(delta > 0.0 && delta <= 0.1) {
        return Err(regime("need 0 < delta <= 0.1"));
    }
    let s_min = 8.0 * (2.0 * (1.0 / delta).log2()).sqrt();
    if s < s_min {
        return Err(regime(format!(
            "need s >= 8*sqrt(2*log2(1/delta)) = {s_min:.4}, got {s}"
        )));
    }
    let n_min = 16.0 * s * (2.0 * (1.0 / delta).ln()).sqrt();
    if n % 2 == 1 || (n as f64) < n_min {
        return Err(regime(format!(
            "need N even and N >= 16*s*sqrt(2*ln(1/delta)) = {n_min:.1}, got {n}"
        )));
    }
    let nf = n as f64;
    if t.abs() > nf / 8.0 {
        return Err(regime(format!("need |t| <= N/8 = {}, got {t}", nf / 8.0)));
    }
    let half = (n / 2) as i64;
    let tail = (4.0 * s).ceil() as i64 + 2;
    let lo = (-half).min((-t).floor() as i64 - tail);
    let hi = (half - 1).max((-t).ceil() as i64 + tail);
    let len = (hi - lo + 1) as usize;
    let idx = |x: i64| (x - lo) as usize;
    let mut full = vec![C64::new(0.0, 0.0); len];
    let mut tr = vec![C64::new(0.0, 0.0); len];
    let mut md = vec![C64::new(0.0, 0.0); len];
    for x in lo..=hi {
        let y = x as f64 + t;
        let amp = phase(y) * rho(s, y);
        full[idx(x)] = amp;
        if (-half..half).contains(&x) {
            tr[idx(x)] = amp;
        }
        let folded = (x + half).rem_euclid(n as i64) - half;
        md[idx(folded)] += amp;
    }
    for v in [&mut full, &mut tr, &mut md] {
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
    }
    let dist = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    Ok(StateCloseness {
        full_vs_truncated: dist(&full, &tr),
        full_vs_modular: dist(&full, &md),
        truncated_vs_modular: dist(&tr, &md),
    })
}

/// Exact sampler for j ∈ ℤ with Pr[j] ∝ p_σ(j − ν), by rejection from a
/// two-sided geometric proposal centred at round(ν). Works for any σ > 0
/// without tabulating the support.
pub fn sample_shifted(rng: &mut Rng, sigma: f64, nu: f64) -> i64 {
    debug_assert!(sigma > 0.0);
    let m = nu.round();
    let b = sigma / (2.0 * std::f64::consts::PI).sqrt();
    let log_r = -1.0 / b;
    let log_bound = 0.5 + (nu - m).abs() / b;
    loop {
        let u: f64 = rng.random();
        // u ∈ [0,1); 1 − u ∈ (0,1] keeps the log finite
        let g = ((1.0 - u).ln() / log_r).floor();
        let negative: bool = rng.random();
        if g == 0.0 && negative {
            continue;
        }
        let j = if negative { m - g } else { m + g };
        let x = j - nu;
        let log_ratio = -std::f64::consts::PI * x * x / (sigma * sigma) + g / b - log_bound;
        let v: f64 = rng.random();
        if v.ln() < log_ratio {
            return j as i64;
        }
    }
}
