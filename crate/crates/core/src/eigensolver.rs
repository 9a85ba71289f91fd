//! Top-level eigenvector algorithms: the classical noisy power method, the
//! inner-product estimator and the phase-estimation power method built on
//! it, eigenvalue-magnitude search, projector tomography, the top-q
//! pipeline and top-eigenvector state preparation.
//!
//! Block-encodings and Hamiltonian simulation are emulated by exact linear
//! algebra; each use charges the ledger with its cost formula.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{invalid, regime, Error, Result};
use crate::kptree::{ceil_log2, KPTree};
use crate::ledger::{Counter, Formula, QueryLedger};
use crate::phase::{amp_estimate, subgpe};
use crate::rng::Rng;
use crate::spectral::{
    gaussian_matrix, left_singular_above, op_norm, project_above, singular_values, CMatrix, CVector, Field,
    HermitianMatrix, ProjectMode, SpectralDecomposition, C64,
};
use crate::tomography::{refined_tomography, unbiased_tomography};

fn gaussian_vector(d: usize, field: Field, rng: &mut Rng) -> CVector {
    gaussian_matrix(d, 1, field, rng).column(0).into_owned()
}

fn unit(v: &CVector) -> Result<CVector> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Degenerate(format!("cannot normalize a vector of norm {n}")));
    }
    Ok(v / C64::new(n, 0.0))
}

fn random_start(d: usize, field: Field, rng: &mut Rng) -> CVector {
    loop {
        let g = gaussian_vector(d, field, rng);
        if let Ok(w) = unit(&g) {
            return w;
        }
    }
}

/// tan θ between `w` and the unit vector `v1` (∞ when orthogonal).
pub fn tangent(w: &CVector, v1: &CVector) -> f64 {
    let c = v1.dotc(w).norm();
    let s = (w.norm_squared() - c * c).max(0.0).sqrt();
    if c == 0.0 {
        f64::INFINITY
    } else {
        s / c
    }
}

/// |⟨v1, w⟩|, the success statistic of every top-eigenvector routine.
pub fn overlap(w: &CVector, v1: &CVector) -> f64 {
    v1.dotc(w).norm()
}

// ---------------------------------------------------------------------------
// Classical noisy power method

/// Perturbation added to each matrix-vector product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// ‖G‖ = εγ/5 exactly, with the v₁ component at the γ/(50√d) bound
    /// and pointing against the signal; the rest is a random direction.
    Compliant,
    /// Cancels the v₁ component of Aw_k, capped at `factor` times the
    /// overlap bound.
    Adversarial {
        factor: f64,
    },
}

/// ⌈(10|λ₁|/γ)·log₂(20d/ε)⌉.
pub fn npm_iterations(lambda1_abs: f64, gamma: f64, eps: f64, d: usize) -> usize {
    ((10.0 * lambda1_abs / gamma) * (20.0 * d as f64 / eps).log2())
        .ceil()
        .max(1.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NpmConfig {
    pub gamma: f64,
    pub eps: f64,
    pub iterations: usize,
    pub noise: NoiseModel,
}

impl NpmConfig {
    pub fn new(gamma: f64, eps: f64, lambda1_abs: f64, d: usize, noise: NoiseModel) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(invalid("gap must be positive"));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(regime(format!("need 0 < eps < 0.5, got {eps}")));
        }
        Ok(NpmConfig {
            gamma,
            eps,
            iterations: npm_iterations(lambda1_abs, gamma, eps, d),
            noise,
        })
    }

    pub fn norm_bound(&self) -> f64 {
        self.eps * self.gamma / 5.0
    }

    pub fn overlap_bound(&self, d: usize) -> f64 {
        self.gamma / (50.0 * (d as f64).sqrt())
    }
}

/// Source of the perturbation G_k, given the iterate w_k and the exact Aw_k.
pub trait NoiseOracle {
    fn noise(&mut self, k: usize, w: &CVector, aw: &CVector, rng: &mut Rng) -> CVector;
}

impl<F> NoiseOracle for F
where
    F: FnMut(usize, &CVector, &CVector, &mut Rng) -> CVector,
{
    fn noise(&mut self, k: usize, w: &CVector, aw: &CVector, rng: &mut Rng) -> CVector {
        self(k, w, aw, rng)
    }
}

/// Noise drawn from a [`NoiseModel`], which needs the true v₁.
#[derive(Debug, Clone)]
pub struct ModelNoise {
    model: NoiseModel,
    v1: CVector,
    norm_bound: f64,
    overlap_bound: f64,
    field: Field,
}

impl ModelNoise {
    pub fn new(cfg: &NpmConfig, v1: CVector, field: Field) -> Self {
        let d = v1.len();
        ModelNoise {
            model: cfg.noise,
            norm_bound: cfg.norm_bound(),
            overlap_bound: cfg.overlap_bound(d),
            v1,
            field,
        }
    }
}

fn unit_phase(z: C64) -> C64 {
    if z.norm() == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        z / z.norm()
    }
}

impl NoiseOracle for ModelNoise {
    fn noise(&mut self, _k: usize, _w: &CVector, aw: &CVector, rng: &mut Rng) -> CVector {
        let d = self.v1.len();
        let signal = self.v1.dotc(aw);
        match self.model {
            NoiseModel::None => CVector::zeros(d),
            NoiseModel::Compliant => {
                let b = self.overlap_bound.min(self.norm_bound);
                let along = -unit_phase(signal) * b;
                let mut r = gaussian_vector(d, self.field, rng);
                let proj = self.v1.dotc(&r);
                r -= &self.v1 * proj;
                let perp = (self.norm_bound * self.norm_bound - b * b).max(0.0).sqrt();
                let rn = r.norm();
                let r = if rn > 0.0 {
                    r * C64::new(perp / rn, 0.0)
                } else {
                    CVector::zeros(d)
                };
                &self.v1 * along + r
            }
            NoiseModel::Adversarial { factor } => {
                let mag = signal.norm().min(factor * self.overlap_bound);
                &self.v1 * (-unit_phase(signal) * mag)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpmRun {
    pub w: CVector,
    pub iterations: usize,
    /// tan θ_k for k = 0..=K when a reference v₁ was supplied.
    pub tangents: Vec<f64>,
}

/// Noisy power iteration y_k = Aw_k + G_k, w_{k+1} = y_k/‖y_k‖ from a
/// uniformly random unit start. Assumes ‖A‖ ≤ 1; this is not checked.
pub fn npm_classical(
    a: &HermitianMatrix,
    cfg: &NpmConfig,
    oracle: &mut dyn NoiseOracle,
    track: Option<&CVector>,
    rng: &mut Rng,
) -> Result<NpmRun> {
    if cfg.iterations == 0 {
        return Err(invalid("need at least one iteration"));
    }
    let d = a.dim();
    let mut w = random_start(d, a.field(), rng);
    let mut tangents = Vec::new();
    if let Some(v1) = track {
        tangents.push(tangent(&w, v1));
    }
    for k in 0..cfg.iterations {
        let aw = a.matvec(&w);
        let g = oracle.noise(k, &w, &aw, rng);
        if g.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: g.len(),
            });
        }
        w = unit(&(aw + g)).map_err(|_| Error::Degenerate(format!("y_{k} vanished")))?;
        if let Some(v1) = track {
            tangents.push(tangent(&w, v1));
        }
    }
    Ok(NpmRun {
        w,
        iterations: cfg.iterations,
        tangents,
    })
}

/// First k at which tan θ_{k+1} > max{ε, tan θ_k · max{ε, ρ}}, with
/// ρ = |λ₂/λ₁|^{2/5}. The recursion is only claimed once the start has
/// |α₁| ≥ 1/(10√d), so callers should condition on that.
pub fn tangent_violation(tangents: &[f64], eps: f64, lambda_ratio: f64) -> Option<usize> {
    let rho = lambda_ratio.abs().powf(0.4);
    let factor = eps.max(rho);
    tangents.windows(2).position(|t| {
        let bound = eps.max(t[0] * factor);
        t[1] > bound * (1.0 + 1e-9) + 1e-12
    })
}

/// |α₁⁰| ≥ 1/(10√d), the start condition of the convergence proof.
pub fn good_start(tan0: f64, d: usize) -> bool {
    let cos = 1.0 / (1.0 + tan0 * tan0).sqrt();
    cos >= 1.0 / (10.0 * (d as f64).sqrt())
}

// ---------------------------------------------------------------------------
// Inner-product estimator

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpeConfig {
    pub tau: f64,
    pub delta: f64,
    pub zeta: f64,
}

impl IpeConfig {
    pub fn new(tau: f64, delta: f64, zeta: f64) -> Result<Self> {
        for (name, x) in [("tau", tau), ("delta", delta), ("zeta", zeta)] {
            if !(x > 0.0 && x <= 0.1) {
                return Err(regime(format!("need 0 < {name} <= 0.1, got {x}")));
            }
        }
        Ok(IpeConfig { tau, delta, zeta })
    }

    /// Entries with |u_j| above d^{−1/4} are found and summed exactly.
    pub fn split_threshold(d: usize) -> f64 {
        (d as f64).powf(-0.25)
    }

    /// At most √d entries of a vector in the unit ball exceed the threshold.
    pub fn large_entry_cap(d: usize) -> f64 {
        (d as f64).sqrt()
    }
}

/// Estimate of Re Σ_j u_j w_j where w is held in a KP-tree.
pub fn ipe(u: &CVector, w: &KPTree, cfg: &IpeConfig, rng: &mut Rng, ledger: &mut QueryLedger) -> Result<f64> {
    let depth = w.depth();
    let mut dense = CVector::zeros(w.dim());
    for j in 0..w.dim() {
        dense[j] = w.query(depth, j)?;
    }
    ipe_dense(u, &dense, depth, cfg, rng, ledger)
}

/// Complex Σ_j u_j w_j via two real estimates (the second on −iu).
pub fn ipe_complex(u: &CVector, w: &KPTree, cfg: &IpeConfig, rng: &mut Rng, ledger: &mut QueryLedger) -> Result<C64> {
    let re = ipe(u, w, cfg, rng, ledger)?;
    let im = ipe(&(u * C64::new(0.0, -1.0)), w, cfg, rng, ledger)?;
    Ok(C64::new(re, im))
}

fn ipe_dense(
    u: &CVector,
    w: &CVector,
    depth: usize,
    cfg: &IpeConfig,
    rng: &mut Rng,
    ledger: &mut QueryLedger,
) -> Result<f64> {
    let d = u.len();
    if w.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: w.len(),
        });
    }
    if u.norm() > 1.0 + 1e-12 {
        return Err(invalid(format!("row norm {} exceeds 1", u.norm())));
    }
    let thr = IpeConfig::split_threshold(d);
    // boundary entries (|u_j| = d^{-1/4}) stay in the small part
    let mut large: Vec<usize> = (0..d).filter(|&j| u[j].norm() > thr).collect();
    if large.len() as f64 > IpeConfig::large_entry_cap(d) {
        return Err(invalid(format!(
            "{} entries exceed d^(-1/4), more than sqrt(d)",
            large.len()
        )));
    }
    let df = d as f64;
    ledger.charge(
        "ipe",
        Formula::IpeFind,
        Counter::MatrixQueries,
        df.powf(0.75) * (df / cfg.delta).log2(),
    )?;
    // the search misses an entry with probability at most δ/2
    if !large.is_empty() && rng.random::<f64>() < cfg.delta / 2.0 {
        let drop = rng.random_range(0..large.len());
        large.remove(drop);
    }
    let mut is_large = vec![false; d];
    let mut mu2 = 0.0;
    for &j in &large {
        is_large[j] = true;
        mu2 += (u[j] * w[j]).re;
    }
    let mut mu1 = 0.0;
    for j in 0..d {
        if !is_large[j] && u[j].norm() <= thr {
            mu1 += (u[j] * w[j]).re;
        }
    }
    ledger.charge("ipe", Formula::KpStatePrep, Counter::KpReads, 2.0 * depth as f64)?;
    ledger.charge(
        "ipe",
        Formula::IpeSmallPart,
        Counter::MatrixQueries,
        df.powf(0.25) / cfg.zeta,
    )?;
    // phase estimation needs a phase in [0,1]; (x+1)/2 halves the error
    let a = ((mu1.clamp(-1.0, 1.0)) + 1.0) / 2.0;
    let est = subgpe(a, cfg.zeta / 2.0, cfg.tau, rng, ledger, "ipe")?;
    Ok(2.0 * est - 1.0 + mu2)
}

// ---------------------------------------------------------------------------
// Quantum noisy power method

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QnpmParams {
    pub iterations: usize,
    pub ipe: IpeConfig,
}

impl QnpmParams {
    /// K = ⌈(10|λ₁|/γ)log₂(20d/ε)⌉, δ = 1/(1000Kd), τ = δ/(1000Kd²),
    /// ζ = εγ/(100√d·√log₂(1000Kd/δ)).
    pub fn new(d: usize, gamma: f64, eps: f64, lambda1_abs: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(invalid("gap must be positive"));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(regime(format!("need 0 < eps <= 1, got {eps}")));
        }
        let k = npm_iterations(lambda1_abs, gamma, eps, d);
        let kd = k as f64 * d as f64;
        let delta = 1.0 / (1000.0 * kd);
        let tau = delta / (1000.0 * kd * d as f64);
        let zeta = eps * gamma / (100.0 * (d as f64).sqrt() * (1000.0 * kd / delta).log2().sqrt());
        Ok(QnpmParams {
            iterations: k,
            ipe: IpeConfig::new(tau, delta, zeta.min(0.1))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QnpmRun {
    pub w: CVector,
    pub iterations: usize,
    /// ‖y_k − Aw_k‖ per iteration.
    pub noise_norms: Vec<f64>,
    /// |⟨y_k − Aw_k, v₁⟩| per iteration, when v₁ was supplied.
    pub noise_overlaps: Vec<f64>,
    pub tangents: Vec<f64>,
}

/// One noisy product y ≈ Aw, each entry from IPE on a row rescaled by
/// max(1, ‖A_j‖).
pub fn ipe_matvec(
    a: &HermitianMatrix,
    w: &CVector,
    cfg: &IpeConfig,
    rng: &mut Rng,
    ledger: &mut QueryLedger,
) -> Result<CVector> {
    let d = a.dim();
    let tree = KPTree::build(w)?;
    ledger.charge("qnpm", Formula::Classical, Counter::ElementaryGates, (2 * d) as f64)?;
    let depth = tree.depth();
    let complex = a.field() == Field::Complex;
    let mut y = CVector::zeros(d);
    for j in 0..d {
        let row = a.row(j);
        let scale = row.norm().max(1.0);
        let u = if scale > 1.0 { &row / C64::new(scale, 0.0) } else { row };
        let re = ipe_dense(&u, w, depth, cfg, rng, ledger)?;
        let im = if complex {
            ipe_dense(&(&u * C64::new(0.0, -1.0)), w, depth, cfg, rng, ledger)?
        } else {
            0.0
        };
        y[j] = C64::new(re, im) * scale;
    }
    Ok(y)
}

/// Power iteration with every product estimated entrywise by IPE.
pub fn qnpm(
    a: &HermitianMatrix,
    params: &QnpmParams,
    track: Option<&CVector>,
    rng: &mut Rng,
    ledger: &mut QueryLedger,
) -> Result<QnpmRun> {
    let d = a.dim();
    let mut w = random_start(d, a.field(), rng);
    let mut run = QnpmRun {
        w: CVector::zeros(d),
        iterations: params.iterations,
        noise_norms: Vec::with_capacity(params.iterations),
        noise_overlaps: Vec::new(),
        tangents: Vec::new(),
    };
    if let Some(v1) = track {
        run.tangents.push(tangent(&w, v1));
    }
    for k in 0..params.iterations {
        let y = ipe_matvec(a, &w, &params.ipe, rng, ledger)?;
        let e = &y - a.matvec(&w);
        run.noise_norms.push(e.norm());
        if let Some(v1) = track {
            run.noise_overlaps.push(v1.dotc(&e).norm());
        }
        w = unit(&y).map_err(|_| Error::Degenerate(format!("y_{k} vanished")))?;
        if let Some(v1) = track {
            run.tangents.push(tangent(&w, v1));
        }
    }
    run.w = w;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapGuessRun {
    pub run: QnpmRun,
    pub gamma: f64,
    pub attempts: usize,
    pub verified: bool,
    /// ‖y − ρw‖ / |ρ| from the verification product.
    pub residual: f64,
}

/// Unknown gap: tries γ = 1/2, 1/4, … down to `gamma_floor`, accepting the
/// first output whose extra IPE product y satisfies ‖y − ρw‖ ≤ ε|ρ|/2 with
/// ρ = Re⟨w, y⟩.
pub fn qnpm_unknown_gap(
    a: &HermitianMatrix,
    eps: f64,
    gamma_floor: f64,
    rng: &mut Rng,
    ledger: &mut QueryLedger,
) -> Result<GapGuessRun> {
    if !(gamma_floor > 0.0 && gamma_floor <= 0.5) {
        return Err(invalid("gamma floor must lie in (0, 1/2]"));
    }
    let d = a.dim();
    let mut gamma = 0.5;
    let mut attempts = 0;
    loop {
        attempts += 1;
        let params = QnpmParams::new(d, gamma, eps, 1.0)?;
        let run = qnpm(a, &params, None, rng, ledger)?;
        let y = ipe_matvec(a, &run.w, &params.ipe, rng, ledger)?;
        let rho = run.w.dotc(&y).re;
        let residual = if rho == 0.0 {
            f64::INFINITY
        } else {
            (&y - &run.w * C64::new(rho, 0.0)).norm() / rho.abs()
        };
        let verified = residual <= eps / 2.0;
        if verified || gamma / 2.0 < gamma_floor {
            return Ok(GapGuessRun {
                run,
                gamma,
                attempts,
                verified,
                residual,
            });
        }
        gamma /= 2.0;
    }
}

// ---------------------------------------------------------------------------
// Eigenvalue-magnitude search

/// Binary search for |λ_q| to within γ/100. Phase estimation of e^{πiλ/2}
/// on a grid of M = 2^⌈log₂(3200/γ)⌉ points (Fejér-kernel outcomes) with a
/// median over r runs, so each eigenvalue is rounded outside ±γ/200 with
/// probability at most δ′ = δ/(10d). The mixture probabilities p_μ are
/// tabulated exactly once; each search step estimates √p_μ by amplitude
/// estimation.
#[derive(Debug, Clone)]
pub struct LambdaSearch {
    pub d: usize,
    pub q: usize,
    pub gamma: f64,
    pub delta: f64,
    pub grid: usize,
    pub repetitions: usize,
    /// p_μ at μ_k = kγ/300 for k = 0..top; μ beyond the table counts as "above".
    p_table: Vec<f64>,
    /// max_i single-run probability of an error beyond γ/200.
    pub single_failure: f64,
}

/// Smallest odd r with Pr[Bin(r, f) ≥ (r+1)/2] ≤ target.
fn median_runs(f: f64, target: f64) -> usize {
    if f <= 0.0 {
        return 1;
    }
    let mut r = 1u64;
    loop {
        let tail = Binomial::new(f.min(1.0), r).map(|b| b.sf((r - 1) / 2)).unwrap_or(1.0);
        if tail <= target || r > 100_001 {
            return r as usize;
        }
        r += 2;
    }
}

/// Pr[median of r draws ≥ threshold index] given Pr[one draw ≥ it] = p.
fn median_tail(p: f64, r: usize) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let r = r as u64;
    Binomial::new(p, r).map(|b| b.sf((r - 1) / 2)).unwrap_or(0.0)
}

impl LambdaSearch {
    pub fn new(dec: &SpectralDecomposition, q: usize, gamma: f64, delta: f64) -> Result<Self> {
        let d = dec.dim();
        if q == 0 || q >= d {
            return Err(invalid(format!("need 1 <= q < d, got q={q}, d={d}")));
        }
        if !(gamma > 0.0 && gamma <= 2.0) {
            return Err(invalid("gap must lie in (0, 2]"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("delta must lie in (0,1)"));
        }
        let delta1 = delta / (10.0 * d as f64);
        let grid = 1usize << (3200.0 / gamma).log2().ceil() as u32;
        let half = grid as i64 / 2;
        let step = 4.0 / grid as f64;
        // outcome index t ∈ [−M/2, M/2) reads as λ̃ = 4t/M
        let dists: Vec<Vec<f64>> = dec
            .eigenvalues
            .iter()
            .map(|&lam| {
                let x = lam / 4.0;
                (-half..half)
                    .map(|t| fejer_turns(grid, t as f64 / grid as f64 - x))
                    .collect()
            })
            .collect();
        let window = gamma / 200.0;
        let mut single_failure: f64 = 0.0;
        for (dist, &lam) in dists.iter().zip(dec.eigenvalues.iter()) {
            let bad: f64 = dist
                .iter()
                .enumerate()
                .filter(|(t, _)| ((*t as i64 - half) as f64 * step - lam).abs() > window)
                .map(|(_, p)| p)
                .sum();
            single_failure = single_failure.max(bad);
        }
        let repetitions = median_runs(single_failure, delta1);
        let top = search_top(gamma);
        let mut p_table = vec![0.0; top];
        for dist in &dists {
            // suffix/prefix sums over outcome indices
            let mut prefix = vec![0.0; grid + 1];
            for t in 0..grid {
                prefix[t + 1] = prefix[t] + dist[t];
            }
            let total = prefix[grid];
            for (k, slot) in p_table.iter_mut().enumerate() {
                let mu = k as f64 * gamma / 300.0;
                if k == 0 {
                    *slot += 1.0;
                    continue;
                }
                // first index with λ̃ ≥ μ, last index with λ̃ ≤ −μ
                let up = ((mu / step - 1e-9).ceil() as i64 + half).clamp(0, grid as i64) as usize;
                let down = ((-mu / step + 1e-9).floor() as i64 + half + 1).clamp(0, grid as i64) as usize;
                let p_up = (total - prefix[up]).max(0.0);
                let p_down = prefix[down];
                *slot += median_tail(p_up, repetitions) + median_tail(p_down, repetitions);
            }
        }
        for p in p_table.iter_mut() {
            *p = (*p / d as f64).min(1.0);
        }
        Ok(LambdaSearch {
            d,
            q,
            gamma,
            delta,
            grid,
            repetitions,
            p_table,
            single_failure,
        })
    }

    /// δ′ = δ/(10d).
    pub fn delta_prime(&self) -> f64 {
        self.delta / (10.0 * self.d as f64)
    }

    /// Midpoint of √(q(1−δ′)/d) and √((q−1)/d + δ′).
    pub fn threshold(&self) -> f64 {
        let (d, q, dp) = (self.d as f64, self.q as f64, self.delta_prime());
        ((q * (1.0 - dp) / d).sqrt() + ((q - 1.0) / d + dp).sqrt()) / 2.0
    }

    /// ⌈5√(qd)⌉ amplitude-estimation resolution.
    pub fn amp_resolution(&self) -> u64 {
        (5.0 * ((self.q * self.d) as f64).sqrt()).ceil() as u64
    }

    /// Failure budget per search step, δ/(10·log₂(300/γ)).
    pub fn step_delta(&self) -> f64 {
        self.delta / (10.0 * (300.0 / self.gamma).log2())
    }

    /// Exact p_μ at μ = kγ/300.
    pub fn p_at(&self, k: usize) -> f64 {
        self.p_table.get(k).copied().unwrap_or(0.0)
    }

    pub fn run(&self, rng: &mut Rng, ledger: &mut QueryLedger) -> Result<LambdaEstimate> {
        let theta = self.threshold();
        let m = self.amp_resolution();
        let step_delta = self.step_delta();
        let per_w = (self.repetitions * self.grid) as f64;
        let (mut lo, mut hi) = (0usize, self.p_table.len());
        let mut steps = 0;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let mut scratch = QueryLedger::compact();
            let est = amp_estimate(self.p_table[mid], m, step_delta, rng, &mut scratch, "lambda_q")?;
            let w_uses = scratch.total(Counter::ControlledUCalls) as f64;
            ledger.charge(
                "lambda_q",
                Formula::PhaseEstimationSweep,
                Counter::ControlledUCalls,
                w_uses * per_w,
            )?;
            steps += 1;
            if est >= theta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // |λ_q| lies in (μ_lo − γ/150, μ_lo + γ/100); report the centre
        Ok(LambdaEstimate {
            estimate: lo as f64 * self.gamma / 300.0 + self.gamma / 600.0,
            steps,
        })
    }
}

/// Number of tabulated μ_k: every μ_k ≥ 1 + γ/150 is above every |λ_i| by
/// more than the rounding window, so the search treats it as "above".
fn search_top(gamma: f64) -> usize {
    ((1.0 + gamma / 150.0) * 300.0 / gamma).ceil() as usize
}

/// Fejér kernel for an offset of `delta` turns on a grid of m points.
fn fejer_turns(m: usize, delta: f64) -> f64 {
    let den = (PI * delta).sin();
    if den.abs() < 1e-15 {
        return 1.0;
    }
    let num = (m as f64 * PI * delta).sin();
    (num * num) / (m as f64 * m as f64 * den * den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub estimate: f64,
    pub steps: usize,
}

/// One-shot |λ_q| estimate; build a [`LambdaSearch`] to reuse the table.
pub fn estimate_lambda_q(
    dec: &SpectralDecomposition,
    q: usize,
    gamma: f64,
    delta: f64,
    rng: &mut Rng,
    ledger: &mut QueryLedger,
) -> Result<f64> {
    Ok(LambdaSearch::new(dec, q, gamma, delta)?.run(rng, ledger)?.estimate)
}

// ---------------------------------------------------------------------------
// Projector tomography

/// Per-round tomography used by [`subspace_tomography`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepTomography {
    /// Error-free: y = Πg/‖g‖ exactly.
    Exact,
    Unbiased,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceConfig {
    pub q: usize,
    pub delta_prime: f64,
    pub eps: f64,
    pub c_prime: f64,
    pub field: Field,
    pub tomography: StepTomography,
}

impl SubspaceConfig {
    pub fn new(q: usize, delta_prime: f64, eps: f64, field: Field) -> Result<Self> {
        if q == 0 {
            return Err(invalid("rank bound q must be positive"));
        }
        if !(delta_prime > 0.0 && delta_prime <= 0.5) {
            return Err(invalid(format!("need 0 < delta' <= 1/2, got {delta_prime}")));
        }
        if !(eps > 0.0 && eps <= 0.5) {
            return Err(invalid(format!("need 0 < eps <= 1/2, got {eps}")));
        }
        Ok(SubspaceConfig {
            q,
            delta_prime,
            eps,
            c_prime: 1.0,
            field,
            tomography: StepTomography::Refined,
        })
    }

    /// m = min(⌈max(16q, 8 ln(10/δ′))⌉, d).
    pub fn m(&self, d: usize) -> usize {
        let raw = (16.0 * self.q as f64).max(8.0 * (10.0 / self.delta_prime).ln()).ceil() as usize;
        raw.min(d)
    }

    /// K = ⌈log₂(√(d/m) + 1)⌉.
    pub fn rounds(&self, d: usize) -> usize {
        let m = self.m(d) as f64;
        ((d as f64 / m).sqrt() + 1.0).log2().ceil() as usize
    }

    /// ε′ = ε/(65 + 98√(ln(10d/δ′)/c′)).
    pub fn eps_prime(&self, d: usize) -> f64 {
        self.eps / (65.0 + 98.0 * ((10.0 * d as f64 / self.delta_prime).ln() / self.c_prime).sqrt())
    }

    /// η = 4·2^{−K}/(7√m).
    pub fn eta(&self, d: usize) -> f64 {
        4.0 * 2f64.powi(-(self.rounds(d) as i32)) / (7.0 * (self.m(d) as f64).sqrt())
    }

    pub const SINGULAR_THRESHOLD: f64 = 1.0 / 14.0;
    pub const ABORT_NORM: f64 = 2.0;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceRun {
    /// Orthonormal columns spanning the recovered image.
    pub w: CMatrix,
    /// Final iterates [g_1^{(K)}, …, g_m^{(K)}].
    pub v: CMatrix,
    /// 2^K Π [g_1, …, g_m].
    pub v_ideal: CMatrix,
    pub m: usize,
    pub rounds: usize,
    pub eps_prime: f64,
}

impl SubspaceRun {
    /// ‖V − V_ideal‖.
    pub fn tomography_error(&self) -> f64 {
        op_norm(&(&self.v - &self.v_ideal))
    }

    /// max_j ‖g_j^{(K)} − 2^K Π g_j‖.
    pub fn max_accumulated_error(&self) -> f64 {
        (0..self.m)
            .map(|j| (self.v.column(j) - self.v_ideal.column(j)).norm())
            .fold(0.0, f64::max)
    }

    /// ‖WW† − Π‖.
    pub fn projector_error(&self, pi: &CMatrix) -> f64 {
        op_norm(&(&self.w * self.w.adjoint() - pi))
    }

    /// Non-zero singular values of V_ideal (those above 1e-9).
    pub fn ideal_singular_values(&self) -> Vec<f64> {
        singular_values(&self.v_ideal)
            .into_iter()
            .filter(|&s| s > 1e-9)
            .collect()
    }
}

/// Learns an isometry W with WW† ≈ Π from exact access to a projector of
/// rank ≤ q. ABORT surfaces as [`Error::Aborted`].
pub fn subspace_tomography(
    pi: &CMatrix,
    cfg: &SubspaceConfig,
    rng: &mut Rng,
    ledger: &mut QueryLedger,
) -> Result<SubspaceRun> {
    let d = pi.nrows();
    if pi.ncols() != d || d == 0 {
        return Err(invalid("projector must be square and non-empty"));
    }
    if (pi * pi - pi).camax() > 1e-10 {
        return Err(invalid("input is not idempotent"));
    }
    let m = cfg.m(d);
    let rounds = cfg.rounds(d);
    let eps_prime = cfg.eps_prime(d);
    let step_delta = cfg.delta_prime / (5.0 * (m * rounds.max(1)) as f64);
    let g0 = if m == d {
        let mut g = CMatrix::zeros(d, d);
        for j in 0..d {
            g[(j, j)] = C64::new(0.25, 0.0);
        }
        g
    } else {
        gaussian_matrix(d, m, cfg.field, rng) * C64::new(cfg.eta(d), 0.0)
    };
    let v_ideal = (pi * &g0) * C64::new(2f64.powi(rounds as i32), 0.0);
    let depth = ceil_log2(d) as f64;
    let mut v = CMatrix::zeros(d, m);
    for j in 0..m {
        let mut g: CVector = g0.column(j).into_owned();
        if g.norm() > SubspaceConfig::ABORT_NORM {
            return Err(Error::Aborted(format!("start vector {j} has norm {}", g.norm())));
        }
        for k in 0..rounds {
            let norm = g.norm();
            if norm == 0.0 {
                break;
            }
            ledger.charge("subspace", Formula::KpStatePrep, Counter::KpReads, 2.0 * depth)?;
            let psi = pi * (&g / C64::new(norm, 0.0));
            let prec = (eps_prime / norm).min(0.5);
            let y = match cfg.tomography {
                StepTomography::Exact => psi,
                StepTomography::Unbiased => unbiased_tomography(&psi, prec, step_delta, d, rng, ledger)?.psi_tilde,
                StepTomography::Refined => refined_tomography(&psi, prec, step_delta, d, rng, ledger)?.psi_tilde,
            };
            g = y * C64::new(2.0 * norm, 0.0);
            if g.norm() > SubspaceConfig::ABORT_NORM {
                return Err(Error::Aborted(format!(
                    "iterate {j} reached norm {} in round {k}",
                    g.norm()
                )));
            }
        }
        v.set_column(j, &g);
    }
    let w = left_singular_above(&v, SubspaceConfig::SINGULAR_THRESHOLD, false);
    ledger.charge(
        "subspace",
        Formula::Classical,
        Counter::ElementaryGates,
        (d * m * m) as f64,
    )?;
    Ok(SubspaceRun {
        w,
        v,
        v_ideal,
        m,
        rounds,
        eps_prime,
    })
}

// ---------------------------------------------------------------------------
// Top-q pipeline

/// ⌈log₂(1/ε_be)/γ⌉·⌈√d⌉ entry queries per use of the projector
/// block-encoding, with ε_be = εδ/(dq).
fn projector_use_cost(d: usize, q: usize, gamma: f64, eps: f64, delta: f64) -> f64 {
    let eps_be = eps * delta / (d * q) as f64;
    ((1.0 / eps_be).log2() / gamma).ceil() * (d as f64).sqrt().ceil()
}

/// Estimate |λ_q|, cut the spectrum at the estimate minus γ/2, learn the
/// resulting projector.
#[derive(Debug, Clone)]
pub struct TopQPipeline {
    pub q: usize,
    pub gamma: f64,
    pub eps: f64,
    pub delta: f64,
    search: Option<LambdaSearch>,
    field: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopQRun {
    pub lambda_estimate: Option<f64>,
    pub threshold: f64,
    pub projector: CMatrix,
    pub subspace: SubspaceRun,
}

impl TopQPipeline {
    pub fn new(dec: &SpectralDecomposition, q: usize, gamma: f64, eps: f64, delta: f64) -> Result<Self> {
        let d = dec.dim();
        if q == 0 || q > d {
            return Err(invalid(format!("need 1 <= q <= d, got {q}")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(invalid("delta must lie in (0,1]"));
        }
        // q = d needs no search: the projector is the identity
        let search = if q < d {
            Some(LambdaSearch::new(dec, q, gamma, delta / 2.0)?)
        } else {
            None
        };
        Ok(TopQPipeline {
            q,
            gamma,
            eps,
            delta,
            search,
            field: dec.field,
        })
    }

    pub fn run(&self, dec: &SpectralDecomposition, rng: &mut Rng, ledger: &mut QueryLedger) -> Result<TopQRun> {
        let d = dec.dim();
        let (lambda_estimate, threshold, projector) = match &self.search {
            Some(search) => {
                let est = search.run(rng, ledger)?.estimate;
                let thr = (est - self.gamma / 2.0).max(0.0);
                (Some(est), thr, project_above(dec, thr, ProjectMode::EigenAbs)?)
            }
            None => (None, 0.0, CMatrix::identity(d, d)),
        };
        let cfg = SubspaceConfig::new(self.q, (self.delta / 2.0).min(0.5), self.eps.min(0.5), self.field)?;
        let mut scratch = QueryLedger::compact();
        let subspace = subspace_tomography(&projector, &cfg, rng, &mut scratch)?;
        let uses = scratch.total(Counter::ControlledUCalls) as f64;
        ledger.merge(&scratch);
        ledger.charge(
            "top_q",
            Formula::ProjectorBlockEncoding,
            Counter::MatrixQueries,
            uses * projector_use_cost(d, self.q, self.gamma, self.eps, self.delta),
        )?;
        Ok(TopQRun {
            lambda_estimate,
            threshold,
            projector,
            subspace,
        })
    }
}

/// One-shot top-q pipeline on `a`.
pub fn top_q_pipeline(
    a: &HermitianMatrix,
    q: usize,
    gamma: f64,
    eps: f64,
    delta: f64,
    rng: &mut Rng,
    ledger: &mut QueryLedger,
) -> Result<CMatrix> {
    let dec = crate::spectral::eigendecompose(a)?;
    Ok(TopQPipeline::new(&dec, q, gamma, eps, delta)?
        .run(&dec, rng, ledger)?
        .subspace
        .w)
}

// ---------------------------------------------------------------------------
// Top-eigenvector state preparation

/// Chebyshev polynomial T_n(x) for any real x.
fn chebyshev(n: f64, x: f64) -> f64 {
    if x.abs() <= 1.0 {
        (n * x.acos()).cos()
    } else if x > 1.0 {
        (n * x.acosh()).cosh()
    } else {
        let sign = if (n as i64) % 2 == 0 { 1.0 } else { -1.0 };
        sign * (n * (-x).acosh()).cosh()
    }
}

/// Fixed-point amplitude amplification with L = 2ℓ+1 queries: success
/// probability 1 − δ²·T_L(T_{1/L}(1/δ)·√(1−λ))² for initial overlap λ.
pub fn fixed_point_success(l: usize, delta: f64, lambda: f64) -> f64 {
    let lf = l as f64;
    let gamma = 1.0 / chebyshev(1.0 / lf, 1.0 / delta);
    let t = chebyshev(lf, (1.0 - lambda).max(0.0).sqrt() / gamma);
    (1.0 - delta * delta * t * t).clamp(0.0, 1.0)
}

/// Smallest odd L ≥ ln(2/δ)/√λ_min.
pub fn fixed_point_length(delta: f64, lambda_min: f64) -> usize {
    let l = ((2.0 / delta).ln() / lambda_min.sqrt()).ceil() as usize;
    l | 1
}

#[derive(Debug, Clone)]
pub struct PrepareV1 {
    pub gamma: f64,
    pub eps: f64,
    search: LambdaSearch,
    field: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareV1Run {
    pub state: CVector,
    /// |⟨v₁, g⟩|/‖g‖ of the random start.
    pub start_overlap: f64,
    /// min over global phase of ‖state − e^{iφ}v₁‖.
    pub distance: f64,
    pub lambda_estimate: f64,
    pub rounds: usize,
}

impl PrepareV1 {
    /// `eps = 0` models exact amplification and an exact block-encoding.
    pub fn new(dec: &SpectralDecomposition, gamma: f64, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) {
            return Err(invalid("need 0 <= eps < 1"));
        }
        Ok(PrepareV1 {
            gamma,
            eps,
            search: LambdaSearch::new(dec, 1, gamma, 0.01)?,
            field: dec.field,
        })
    }

    /// Overlap floor 1/(100√(2d)) of the random start.
    pub fn overlap_floor(d: usize) -> f64 {
        1.0 / (100.0 * (2.0 * d as f64).sqrt())
    }

    pub fn run(&self, dec: &SpectralDecomposition, rng: &mut Rng, ledger: &mut QueryLedger) -> Result<PrepareV1Run> {
        let d = dec.dim();
        let est = self.search.run(rng, ledger)?.estimate;
        let pi = project_above(dec, (est - self.gamma / 2.0).max(0.0), ProjectMode::EigenAbs)?;
        let (g, pg) = loop {
            let g = gaussian_vector(d, self.field, rng);
            let pg = &pi * &g;
            if pg.norm() > 0.0 && g.norm() > 0.0 {
                break (g, pg);
            }
        };
        let v1 = dec.vector(0);
        let start_overlap = overlap(&g, &v1) / g.norm();
        let target = unit(&pg)?;
        let alpha2 = (pg.norm() / g.norm()).powi(2);
        let floor = Self::overlap_floor(d);
        let (state, rounds) = if self.eps == 0.0 {
            (target, 0)
        } else {
            // √(2 − 2√P) ≤ √2·δ_fp ≤ ε/2 once the overlap clears the floor
            let delta_fp = self.eps / (2.0 * std::f64::consts::SQRT_2);
            let l = fixed_point_length(delta_fp, floor * floor);
            let p = fixed_point_success(l, delta_fp, alpha2);
            let junk = orthogonal_unit(&target, self.field, rng);
            let amplified = &target * C64::new(p.sqrt(), 0.0) + junk * C64::new((1.0 - p).sqrt(), 0.0);
            // block-encoding imperfection: a rotation by exactly ε/2 in ℓ₂
            let theta = 2.0 * (self.eps / 4.0).asin();
            let r = orthogonal_unit(&amplified, self.field, rng);
            let state = amplified * C64::new(theta.cos(), 0.0) + r * C64::new(theta.sin(), 0.0);
            (state, (l - 1) / 2)
        };
        if rounds > 0 {
            ledger.charge(
                "prepare_v1",
                Formula::FixedPointRounds,
                Counter::ControlledUCalls,
                rounds as f64,
            )?;
            let per_use = projector_use_cost(d, 1, self.gamma, self.eps.max(1e-12), 0.01);
            ledger.charge(
                "prepare_v1",
                Formula::ProjectorBlockEncoding,
                Counter::MatrixQueries,
                rounds as f64 * per_use,
            )?;
        }
        let distance = (2.0 - 2.0 * overlap(&state, &v1)).max(0.0).sqrt();
        Ok(PrepareV1Run {
            state,
            start_overlap,
            distance,
            lambda_estimate: est,
            rounds,
        })
    }
}

fn orthogonal_unit(v: &CVector, field: Field, rng: &mut Rng) -> CVector {
    loop {
        let mut r = gaussian_vector(v.len(), field, rng);
        let vn = v.norm_squared();
        if vn > 0.0 {
            let c = v.dotc(&r) / vn;
            r -= v * c;
        }
        if let Ok(u) = unit(&r) {
            return u;
        }
    }
}

/// One-shot state preparation on `a`.
pub fn prepare_v1_emulated(
    a: &HermitianMatrix,
    gamma: f64,
    eps: f64,
    rng: &mut Rng,
    ledger: &mut QueryLedger,
) -> Result<CVector> {
    let dec = crate::spectral::eigendecompose(a)?;
    Ok(PrepareV1::new(&dec, gamma, eps)?.run(&dec, rng, ledger)?.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::spectral::{diagonal, eigendecompose, gen_hard_instance, with_spectrum};

    fn basis(d: usize, i: usize) -> CVector {
        let mut e = CVector::zeros(d);
        e[i] = C64::new(1.0, 0.0);
        e
    }

    #[test]
    fn noiseless_power_method_converges() {
        let mut vals = vec![0.5; 20];
        vals[0] = 1.0;
        let a = diagonal(&vals);
        let cfg = NpmConfig::new(0.5, 0.1, 1.0, 20, NoiseModel::None).unwrap();
        let v1 = basis(20, 0);
        for seed in 0..5 {
            let mut rng = stream(seed, 0);
            let mut noise = ModelNoise::new(&cfg, v1.clone(), Field::Real);
            let run = npm_classical(&a, &cfg, &mut noise, Some(&v1), &mut rng).unwrap();
            assert!(*run.tangents.last().unwrap() <= 0.05);
            assert_eq!(tangent_violation(&run.tangents, 0.1, 0.5), None);
        }
    }

    #[test]
    fn compliant_noise_respects_bounds() {
        let cfg = NpmConfig::new(0.9, 0.1, 1.0, 50, NoiseModel::Compliant).unwrap();
        let v1 = basis(50, 3);
        let mut noise = ModelNoise::new(&cfg, v1.clone(), Field::Real);
        let mut rng = stream(1, 0);
        let w = random_start(50, Field::Real, &mut rng);
        let g = noise.noise(0, &w, &w, &mut rng);
        assert!((g.norm() - cfg.norm_bound()).abs() < 1e-12);
        assert!((v1.dotc(&g).norm() - cfg.overlap_bound(50)).abs() < 1e-12);
    }

    #[test]
    fn npm_hard_instance_and_negative_control() {
        let d = 100;
        let inst = gen_hard_instance(d, 7).unwrap();
        let dec = eigendecompose(&inst.matrix).unwrap();
        let v1 = dec.vector(0);
        let l1 = dec.eigenvalues[0].abs();
        let gamma = dec.gap(1);
        let ratio = dec.eigenvalues[1] / dec.eigenvalues[0];
        let cfg = NpmConfig::new(gamma, 0.1, l1, d, NoiseModel::Compliant).unwrap();
        let bad = NpmConfig {
            noise: NoiseModel::Adversarial { factor: 100.0 },
            ..cfg
        };
        let (mut ok, mut ok_bad) = (0, 0);
        for t in 0..20 {
            let mut rng = stream(3, t);
            let mut noise = ModelNoise::new(&cfg, v1.clone(), Field::Real);
            let run = npm_classical(&inst.matrix, &cfg, &mut noise, Some(&v1), &mut rng).unwrap();
            if overlap(&run.w, &v1) >= 1.0 - 0.005 {
                ok += 1;
            }
            if good_start(run.tangents[0], d) {
                assert_eq!(tangent_violation(&run.tangents, 0.1, ratio), None);
            }
            let mut noise = ModelNoise::new(&bad, v1.clone(), Field::Real);
            let run = npm_classical(&inst.matrix, &bad, &mut noise, None, &mut rng).unwrap();
            if overlap(&run.w, &v1) >= 1.0 - 0.005 {
                ok_bad += 1;
            }
        }
        assert!(ok >= 17, "compliant successes {ok}");
        assert!(ok_bad <= 5, "adversarial successes {ok_bad}");
    }

    #[test]
    fn ipe_examples() {
        let d = 16;
        let cfg = IpeConfig::new(0.01, 0.01, 0.01).unwrap();
        let mut ledger = QueryLedger::compact();
        let mut rng = stream(5, 0);
        let w = KPTree::build(&basis(d, 0)).unwrap();
        let u = basis(d, 0) * C64::new(0.5, 0.0);
        let est = ipe(&u, &w, &cfg, &mut rng, &mut ledger).unwrap();
        assert!((est - 0.5).abs() < 0.06, "{est}");
        // all entries small: the phase-estimated part carries everything
        let s = 1.0 / (d as f64).sqrt();
        let u = CVector::from_fn(d, |j, _| C64::new(if j % 3 == 0 { s } else { -s }, 0.0));
        let w = KPTree::build(&u).unwrap();
        let errs: Vec<f64> = (0..2000)
            .map(|_| ipe(&u, &w, &cfg, &mut rng, &mut ledger).unwrap() - 1.0)
            .collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!(mean.abs() < 3e-3, "mean {mean}");
        let tail = errs.iter().filter(|e| e.abs() > 3.0 * cfg.zeta).count() as f64 / errs.len() as f64;
        assert!(
            tail <= 2.0 * (0.01f64).exp() * (-4.5f64).exp() + 0.01 + 0.01,
            "tail {tail}"
        );
        assert!(ipe(&(u * C64::new(2.0, 0.0)), &w, &cfg, &mut rng, &mut ledger).is_err());
    }

    #[test]
    fn qnpm_on_known_spectrum() {
        let d = 16;
        let mut vals = vec![0.1; d];
        vals[0] = 0.9;
        let a = diagonal(&vals);
        let params = QnpmParams::new(d, 0.8, 0.1, 0.9).unwrap();
        let v1 = basis(d, 0);
        let mut ok = 0;
        for t in 0..10 {
            let mut rng = stream(8, t);
            let mut ledger = QueryLedger::compact();
            let run = qnpm(&a, &params, Some(&v1), &mut rng, &mut ledger).unwrap();
            if overlap(&run.w, &v1) >= 1.0 - 0.005 {
                ok += 1;
            }
            assert!(ledger.total(Counter::MatrixQueries) > 0);
        }
        assert!(ok >= 9);
    }

    #[test]
    fn lambda_search_known_spectrum() {
        let mut vals = vec![0.1; 12];
        vals[0] = 0.9;
        vals[1] = 0.6;
        let dec = eigendecompose(&diagonal(&vals)).unwrap();
        let search = LambdaSearch::new(&dec, 2, 0.5, 0.1).unwrap();
        assert!(search.p_at(0) > 0.999);
        for t in 0..20 {
            let mut rng = stream(9, t);
            let mut ledger = QueryLedger::compact();
            let est = search.run(&mut rng, &mut ledger).unwrap().estimate;
            assert!((est - 0.6).abs() <= 0.005, "{est}");
            assert!(ledger.total(Counter::ControlledUCalls) > 0);
        }
        assert!(LambdaSearch::new(&dec, 12, 0.5, 0.1).is_err());
    }

    #[test]
    fn exact_tomography_recovers_projector() {
        let mut rng = stream(10, 0);
        let a = with_spectrum(
            &[
                0.9, 0.8, 0.7, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                0.0, 0.0, 0.0, 0.0,
            ],
            &mut rng,
        );
        let dec = eigendecompose(&a).unwrap();
        let pi = project_above(&dec, 0.5, ProjectMode::EigenAbs).unwrap();
        let mut cfg = SubspaceConfig::new(3, 0.1, 0.2, Field::Real).unwrap();
        cfg.tomography = StepTomography::Exact;
        let mut ledger = QueryLedger::compact();
        let run = subspace_tomography(&pi, &cfg, &mut rng, &mut ledger).unwrap();
        assert_eq!(run.w.ncols(), 3);
        assert!(run.projector_error(&pi) < 1e-9);
        assert!(run.tomography_error() < 1e-12);
    }

    #[test]
    fn refined_tomography_meets_precision() {
        let d = 16;
        let mut rng = stream(11, 0);
        let mut vals = vec![0.0; d];
        vals[..2].copy_from_slice(&[0.9, 0.8]);
        let dec = eigendecompose(&with_spectrum(&vals, &mut rng)).unwrap();
        let pi = project_above(&dec, 0.5, ProjectMode::EigenAbs).unwrap();
        let cfg = SubspaceConfig::new(2, 0.1, 0.2, Field::Real).unwrap();
        for t in 0..3 {
            let mut rng = stream(11, t + 1);
            let mut ledger = QueryLedger::compact();
            let run = subspace_tomography(&pi, &cfg, &mut rng, &mut ledger).unwrap();
            let err = run.projector_error(&pi);
            assert!(err <= 0.2, "{err}");
            assert!(err <= 14.0 * run.tomography_error() + 1e-12);
            assert!(run.max_accumulated_error() <= 5.0 * run.eps_prime);
        }
    }

    #[test]
    fn full_rank_pipeline_is_identity() {
        let vals = [0.9, 0.7, 0.5, 0.3];
        let dec = eigendecompose(&diagonal(&vals)).unwrap();
        let pipe = TopQPipeline::new(&dec, 4, 0.3, 0.2, 0.1).unwrap();
        let mut rng = stream(12, 0);
        let mut ledger = QueryLedger::compact();
        let run = pipe.run(&dec, &mut rng, &mut ledger).unwrap();
        assert_eq!(run.subspace.w.ncols(), 4);
        let ww = &run.subspace.w * run.subspace.w.adjoint();
        assert!(op_norm(&(ww - CMatrix::identity(4, 4))) < 0.2);
    }

    #[test]
    fn fixed_point_amplification() {
        let delta = 0.05;
        let lmin = 1e-3;
        let l = fixed_point_length(delta, lmin);
        assert_eq!(l % 2, 1);
        for lam in [lmin, 0.01, 0.3, 0.9, 1.0] {
            assert!(
                fixed_point_success(l, delta, lam) >= 1.0 - delta * delta - 1e-9,
                "{lam}"
            );
        }
    }

    #[test]
    fn exact_state_preparation() {
        let d = 32;
        let inst = gen_hard_instance(d, 3).unwrap();
        let dec = eigendecompose(&inst.matrix).unwrap();
        let prep = PrepareV1::new(&dec, dec.gap(1), 0.0).unwrap();
        let mut rng = stream(13, 0);
        let mut ledger = QueryLedger::compact();
        let run = prep.run(&dec, &mut rng, &mut ledger).unwrap();
        assert!(run.distance < 1e-9);
        let prep = PrepareV1::new(&dec, dec.gap(1), 0.1).unwrap();
        let run = prep.run(&dec, &mut rng, &mut ledger).unwrap();
        if run.start_overlap >= PrepareV1::overlap_floor(d) {
            assert!(run.distance <= 0.1, "{}", run.distance);
        }
    }
}
