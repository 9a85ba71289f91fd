//! Pure-state tomography: computational-basis magnitudes, the unbiased
//! conditional-sample estimator, iterative refinement with a
//! state-preparation oracle, and the coupled "almost ideal" diagnostic.

use nalgebra::DVector;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ledger::{Counter, Formula, QueryLedger};
use crate::rng::Rng;
use crate::spectral::{op_norm, CMatrix, CVector, C64};
use crate::stats::multinomial;

/// Which of the two reference-interference states is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// (|+⟩|ψ⟩ + |−⟩|ψ̄⟩)/√2
    Real,
    /// (|+⟩|ψ⟩ + i|−⟩|ψ̄⟩)/√2
    Imag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TomographyMode {
    Basis,
    Unbiased,
    Refined,
}

/// Output of a tomography routine.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyEstimate {
    pub psi_tilde: CVector,
    /// Copies of the target (or residual) state consumed.
    pub copies: u64,
    /// min_j |ψ̄_j|²/|ψ_j|² of the reference used, when one was built.
    pub eta: Option<f64>,
}

fn check_target(psi: &CVector) -> Result<()> {
    if psi.is_empty() {
        return Err(invalid("empty state"));
    }
    if psi.norm() > 1.0 + 1e-12 {
        return Err(invalid(format!("state norm {} exceeds 1", psi.norm())));
    }
    Ok(())
}

/// Standard basis e_0, …, e_{d−1}.
pub fn standard_basis(d: usize) -> Vec<CVector> {
    (0..d)
        .map(|j| {
            let mut e = CVector::zeros(d);
            e[j] = C64::new(1.0, 0.0);
            e
        })
        .collect()
}

/// ψ̄_j = √(frequency of outcome j) from n computational-basis measurements
/// of |0̄⟩|ψ⟩ + |0̄^⊥⟩.
pub fn basis_tomography(psi: &CVector, n: u64, rng: &mut Rng) -> Result<DVector<f64>> {
    check_target(psi)?;
    if n == 0 {
        return Err(invalid("need at least one copy"));
    }
    let probs: Vec<f64> = psi.iter().map(|x| x.norm_sqr()).collect();
    let counts = multinomial(rng, n, &probs);
    Ok(DVector::from_iterator(
        psi.len(),
        counts.iter().map(|&c| (c as f64 / n as f64).sqrt()),
    ))
}

/// Copies for an ℓ∞ error ε with failure probability δ: ⌈ln(2d/δ)/ε²⌉.
pub fn basis_sample_count(d: usize, eps: f64, delta: f64) -> u64 {
    ((2.0 * d as f64 / delta).ln() / (eps * eps)).ceil() as u64
}

/// ψ̄ = (|ψ′| + 1/√d)/2 from a magnitude estimate ψ′.
pub fn reference_from_magnitudes(mag: &DVector<f64>) -> CVector {
    let floor = 1.0 / (mag.len() as f64).sqrt();
    CVector::from_iterator(mag.len(), mag.iter().map(|m| C64::new((m.abs() + floor) / 2.0, 0.0)))
}

/// min_j |ψ̄_j|²/|ψ_j|² over the support of ψ (∞ when ψ = 0).
pub fn effective_eta(psi: &CVector, psi_bar: &CVector) -> f64 {
    psi.iter()
        .zip(psi_bar.iter())
        .filter(|(p, _)| p.norm_sqr() > 0.0)
        .map(|(p, b)| b.norm_sqr() / p.norm_sqr())
        .fold(f64::INFINITY, f64::min)
}

/// Checks |ψ̄_j|² ≥ max{ε²/d, η|ψ_j|²} and ‖ψ̄‖ ≤ 1.
pub fn check_reference(psi: &CVector, psi_bar: &CVector, eps: f64, eta: f64) -> Result<()> {
    if psi.len() != psi_bar.len() {
        return Err(crate::Error::DimensionMismatch {
            expected: psi.len(),
            got: psi_bar.len(),
        });
    }
    if psi_bar.norm() > 1.0 + 1e-12 {
        return Err(invalid("reference norm exceeds 1"));
    }
    let d = psi.len() as f64;
    for (j, (p, b)) in psi.iter().zip(psi_bar.iter()).enumerate() {
        let need = (eps * eps / d).max(eta * p.norm_sqr());
        if b.norm_sqr() < need * (1.0 - 1e-12) {
            return Err(invalid(format!(
                "reference entry {j} violates the floor: {} < {need}",
                b.norm_sqr()
            )));
        }
    }
    Ok(())
}

/// Outcome probabilities (p_{0,j}, p_{1,j}) = |ψ_j ± ψ̄_j|²/4, with iψ̄ on the imaginary branch.
pub fn branch_probabilities(psi: &CVector, psi_bar: &CVector, branch: Branch) -> (Vec<f64>, Vec<f64>) {
    let rot = match branch {
        Branch::Real => C64::new(1.0, 0.0),
        Branch::Imag => C64::new(0.0, 1.0),
    };
    let p0 = psi
        .iter()
        .zip(psi_bar.iter())
        .map(|(p, b)| (p + rot * b).norm_sqr() / 4.0)
        .collect();
    let p1 = psi
        .iter()
        .zip(psi_bar.iter())
        .map(|(p, b)| (p - rot * b).norm_sqr() / 4.0)
        .collect();
    (p0, p1)
}

/// One measurement: Some((b, j)) for outcome |b⟩|0̄⟩|j⟩, None for the flagged remainder.
pub fn conditional_sample(psi: &CVector, psi_bar: &CVector, branch: Branch, rng: &mut Rng) -> Option<(u8, usize)> {
    let (p0, p1) = branch_probabilities(psi, psi_bar, branch);
    let mut u: f64 = rng.random();
    for (b, probs) in [(0u8, &p0), (1u8, &p1)] {
        for (j, &p) in probs.iter().enumerate() {
            if u < p {
                return Some((b, j));
            }
            u -= p;
        }
    }
    None
}

/// Single-sample estimator ψ′_j = (X_{0,j} − X_{1,j})/|ψ̄_j| of Re/Im(ψ_j ψ̄_j*/|ψ̄_j|).
pub fn single_sample_estimator(psi: &CVector, psi_bar: &CVector, branch: Branch, rng: &mut Rng) -> DVector<f64> {
    let mut out = DVector::zeros(psi.len());
    if let Some((b, j)) = conditional_sample(psi, psi_bar, branch, rng) {
        let sign = if b == 0 { 1.0 } else { -1.0 };
        out[j] = sign / psi_bar[j].norm();
    }
    out
}

/// n ≥ (4d/ε²)(4/3 + 1/η) ln(8k/δ).
pub fn unbiased_sample_count(d: usize, eps: f64, delta: f64, eta: f64, k: usize) -> u64 {
    (4.0 * d as f64 / (eps * eps) * (4.0 / 3.0 + 1.0 / eta) * (8.0 * k as f64 / delta).ln()).ceil() as u64
}

/// ψ̃_j = (s′_{0,j} − s′_{1,j} + i s″_{0,j} − i s″_{1,j}) ψ̄_j/|ψ̄_j|² from n
/// copies of each branch state.
pub fn unbiased_estimate(psi: &CVector, psi_bar: &CVector, n: u64, rng: &mut Rng) -> Result<CVector> {
    check_target(psi)?;
    if psi.len() != psi_bar.len() {
        return Err(crate::Error::DimensionMismatch {
            expected: psi.len(),
            got: psi_bar.len(),
        });
    }
    if n == 0 {
        return Err(invalid("need at least one copy"));
    }
    if psi_bar.iter().any(|b| b.norm_sqr() == 0.0) {
        return Err(invalid("reference has a zero entry"));
    }
    let d = psi.len();
    let mut diff = [vec![0.0; d], vec![0.0; d]];
    for (slot, branch) in [Branch::Real, Branch::Imag].into_iter().enumerate() {
        let (p0, p1) = branch_probabilities(psi, psi_bar, branch);
        let probs: Vec<f64> = p0.iter().chain(p1.iter()).copied().collect();
        let counts = multinomial(rng, n, &probs);
        for j in 0..d {
            diff[slot][j] = (counts[j] as f64 - counts[d + j] as f64) / n as f64;
        }
    }
    Ok(CVector::from_fn(d, |j, _| {
        C64::new(diff[0][j], diff[1][j]) * psi_bar[j] / psi_bar[j].norm_sqr()
    }))
}

/// Basis tomography for a reference (ℓ∞ 1/√d at failure δ/2), then the
/// unbiased estimator with n sized for η = 1/4 and k directions.
pub fn unbiased_tomography(
    psi: &CVector,
    eps: f64,
    delta: f64,
    k: usize,
    rng: &mut Rng,
    ledger: &mut QueryLedger,
) -> Result<TomographyEstimate> {
    check_target(psi)?;
    if !(eps > 0.0 && eps <= 0.5) || !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid("need eps in (0, 1/2] and delta in (0, 1]"));
    }
    let d = psi.len();
    let nb = basis_sample_count(d, 1.0 / (d as f64).sqrt(), delta / 2.0);
    let mag = basis_tomography(psi, nb, rng)?;
    let psi_bar = reference_from_magnitudes(&mag);
    let n = unbiased_sample_count(d, eps, delta / 2.0, 0.25, k.max(1));
    let est = unbiased_estimate(psi, &psi_bar, n, rng)?;
    ledger.charge(
        "tomography",
        Formula::BasisTomography,
        Counter::ControlledUCalls,
        nb as f64,
    )?;
    ledger.charge(
        "tomography",
        Formula::UnbiasedTomography,
        Counter::ControlledUCalls,
        2.0 * n as f64,
    )?;
    Ok(TomographyEstimate {
        psi_tilde: est,
        copies: nb + 2 * n,
        eta: Some(effective_eta(psi, &psi_bar)),
    })
}

/// Radii r_j = ε·2^{R−j}, j = 0..=R, with R = ⌈log₂(1/ε)⌉ so r_0 ≥ 1 and r_R = ε.
pub fn refinement_radii(eps: f64) -> Vec<f64> {
    let r = (1.0 / eps).log2().ceil().max(0.0) as i32;
    (0..=r).map(|j| eps * 2f64.powi(r - j)).collect()
}

/// Iterative-refinement tomography using an exact state-preparation oracle
/// for ψ. Each round prepares φ = (ψ − ψ_est)/(2r), learns it to ℓ₂ error
/// 1/4 and halves the residual radius; a final round at per-direction
/// precision 1/(32√d) gives ψ̃ = ψ′ + 2εφ̃. A copy of a residual state at
/// radius r costs ⌈log₂(d/δ)/r⌉ oracle calls.
pub fn refined_tomography(
    psi: &CVector,
    eps: f64,
    delta: f64,
    k: usize,
    rng: &mut Rng,
    ledger: &mut QueryLedger,
) -> Result<TomographyEstimate> {
    check_target(psi)?;
    if !(eps > 0.0 && eps <= 0.5) || !(delta > 0.0 && delta <= 0.5) {
        return Err(invalid("need eps, delta in (0, 1/2]"));
    }
    let d = psi.len();
    let radii = refinement_radii(eps);
    let rounds = radii.len();
    let sub_delta = delta / (4.0 * rounds as f64);
    let mut est = CVector::zeros(d);
    let mut copies = 0u64;
    let mut sub = QueryLedger::compact();
    for (j, &r) in radii.iter().enumerate() {
        let last = j + 1 == rounds;
        let phi = (psi - &est) / C64::new(2.0 * r, 0.0);
        if phi.norm() > 1.0 {
            // only possible after a failed round; keep the state sub-normalized
            return Err(crate::Error::Aborted(format!(
                "residual norm {} exceeds 1 in round {j}",
                phi.norm()
            )));
        }
        let (sub_eps, sub_k) = if last { (1.0 / 32.0, k.max(1)) } else { (0.25, d) };
        let t = unbiased_tomography(&phi, sub_eps, sub_delta, sub_k, rng, &mut sub)?;
        let per_copy = ((d as f64 / delta).log2() / r).ceil();
        ledger.charge(
            "refined_tomography",
            Formula::RefinedStatePrep,
            Counter::ControlledUCalls,
            t.copies as f64 * per_copy,
        )?;
        copies += t.copies;
        est += t.psi_tilde * C64::new(2.0 * r, 0.0);
    }
    Ok(TomographyEstimate {
        psi_tilde: est,
        copies,
        eta: None,
    })
}

/// |⟨ψ̃ − ψ | v⟩| for each direction.
pub fn direction_errors(est: &CVector, psi: &CVector, dirs: &[CVector]) -> Vec<f64> {
    let diff = est - psi;
    dirs.iter().map(|v| diff.dotc(v).norm()).collect()
}

/// Diagnostics of the coupled estimator ψ̌.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledReport {
    pub trials: usize,
    /// Pilot estimate of Pr[∃j: |⟨ψ̃−ψ|v_j⟩| > ε/√d].
    pub pilot_bad_rate: f64,
    pub zeta: f64,
    /// Fraction of trials where ψ̌ ≠ ψ̃ (estimates TV(ψ̃, ψ̌)).
    pub modified_fraction: f64,
    pub max_direction_error: f64,
    pub direction_bound: f64,
    pub cov_norm_tilde: f64,
    pub cov_norm_check: f64,
    pub cov_bound: f64,
}

fn covariance_norm(samples: &[CVector]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let k = samples[0].len();
    let mean = samples.iter().fold(CVector::zeros(k), |acc, s| acc + s) / C64::new(n as f64, 0.0);
    let mut cov = CMatrix::zeros(k, k);
    for s in samples {
        let c = s - &mean;
        cov += &c * c.adjoint();
    }
    op_norm(&(cov / C64::new((n - 1) as f64, 0.0)))
}

/// Builds ψ̌ from `trials` runs of the unbiased estimator with reference
/// `psi_bar` and n copies: a pilot run estimates p = Pr[A], an independent
/// coin with Pr[X_ζ = 0] = ζ = (δ − p)/(1 − p) tops the bad set up to
/// probability δ, and on the bad set the Π_k component is replaced by its
/// empirical conditional mean.
#[allow(clippy::too_many_arguments)]
pub fn coupled_ideal_check(
    psi: &CVector,
    psi_bar: &CVector,
    n: u64,
    dirs: &[CVector],
    eps: f64,
    delta: f64,
    trials: usize,
    rng: &mut Rng,
) -> Result<CoupledReport> {
    if dirs.is_empty() || trials < 2 {
        return Err(invalid("need at least one direction and two trials"));
    }
    let d = psi.len() as f64;
    let k = dirs.len();
    let thresh = eps / d.sqrt();
    let is_bad = |est: &CVector| direction_errors(est, psi, dirs).iter().any(|&e| e > thresh);
    let mut pilot_bad = 0usize;
    for _ in 0..trials {
        if is_bad(&unbiased_estimate(psi, psi_bar, n, rng)?) {
            pilot_bad += 1;
        }
    }
    let p = pilot_bad as f64 / trials as f64;
    let zeta = if p >= delta { 0.0 } else { (delta - p) / (1.0 - p) };
    let mut coords: Vec<CVector> = Vec::with_capacity(trials);
    let mut flags = Vec::with_capacity(trials);
    for _ in 0..trials {
        let est = unbiased_estimate(psi, psi_bar, n, rng)?;
        let coin_zero = rng.random::<f64>() < zeta;
        flags.push(is_bad(&est) || coin_zero);
        coords.push(CVector::from_iterator(k, dirs.iter().map(|v| v.dotc(&est))));
    }
    let n_bad = flags.iter().filter(|&&b| b).count();
    let mut cond_mean = CVector::zeros(k);
    if n_bad > 0 {
        for (c, &f) in coords.iter().zip(&flags) {
            if f {
                cond_mean += c;
            }
        }
        cond_mean /= C64::new(n_bad as f64, 0.0);
    }
    let truth = CVector::from_iterator(k, dirs.iter().map(|v| v.dotc(psi)));
    let checked: Vec<CVector> = coords
        .iter()
        .zip(&flags)
        .map(|(c, &f)| if f { cond_mean.clone() } else { c.clone() })
        .collect();
    let max_err = checked
        .iter()
        .flat_map(|c| (c - &truth).iter().map(|x| x.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let kf = k as f64;
    Ok(CoupledReport {
        trials,
        pilot_bad_rate: p,
        zeta,
        modified_fraction: n_bad as f64 / trials as f64,
        max_direction_error: max_err,
        direction_bound: (kf + 3.0) / kf * thresh,
        cov_norm_tilde: covariance_norm(&coords),
        cov_norm_check: covariance_norm(&checked),
        cov_bound: (1.0 / (4.0 * (8.0 * kf / delta).ln()) + 25.0 * delta * kf) * eps * eps / d,
    })
}
