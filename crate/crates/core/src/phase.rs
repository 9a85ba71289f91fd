//! Phase-register simulation: QFT, Gaussian phase estimation, the
//! sub-Gaussian phase estimator and an amplitude-estimation emulator.

use std::f64::consts::PI;

use rand::Rng as _;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dgauss::{rho, sample_shifted};
use crate::error::{invalid, regime, Result};
use crate::ledger::{Counter, Formula, QueryLedger};
use crate::rng::Rng;
use crate::spectral::C64;
use crate::stats::median;

/// Unit-norm amplitudes over {0, …, N−1}.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRegister {
    amps: Vec<C64>,
}

impl PhaseRegister {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(invalid("empty register"));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("register norm {norm} is not 1")));
        }
        Ok(PhaseRegister { amps })
    }

    /// Normalizes `amps` first.
    pub fn normalized(mut amps: Vec<C64>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(invalid("cannot normalize a zero register"));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Self::new(amps)
    }

    pub fn uniform(n: usize) -> Self {
        let a = C64::new(1.0 / (n as f64).sqrt(), 0.0);
        PhaseRegister { amps: vec![a; n] }
    }

    pub fn basis(n: usize, k: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); n];
        amps[k] = C64::new(1.0, 0.0);
        PhaseRegister { amps }
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

fn unitary_fft(reg: &PhaseRegister, forward: bool) -> PhaseRegister {
    let n = reg.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if forward {
        planner.plan_fft_forward(n)
    } else {
        planner.plan_fft_inverse(n)
    };
    let mut buf = reg.amps.clone();
    fft.process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|a| *a *= scale);
    PhaseRegister { amps: buf }
}

/// |x⟩ ↦ N^{-1/2} Σ_y e^{2πixy/N} |y⟩.
pub fn qft(reg: &PhaseRegister) -> PhaseRegister {
    unitary_fft(reg, false)
}

/// |x⟩ ↦ N^{-1/2} Σ_y e^{−2πixy/N} |y⟩.
pub fn inverse_qft(reg: &PhaseRegister) -> PhaseRegister {
    unitary_fft(reg, true)
}

/// Parameters of one Gaussian phase estimation with eigenphase e^{πia/4}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpeParams {
    pub a: f64,
    pub s: f64,
    pub n: u64,
    pub delta: f64,
}

/// Smallest admissible width: s = 20√(2 log₂(1/δ)).
pub fn default_width(delta: f64) -> f64 {
    20.0 * (2.0 * (1.0 / delta).log2()).sqrt()
}

/// Register size N = 200⌈s√(log₂(100/δ))⌉.
pub fn default_modulus(s: f64, delta: f64) -> u64 {
    200 * (s * (100.0 / delta).log2().sqrt()).ceil() as u64
}

impl GpeParams {
    /// Width and modulus at their defaults for `delta`.
    pub fn defaults(a: f64, delta: f64) -> Result<Self> {
        let s = default_width(delta);
        Self::with_width(a, s, delta)
    }

    /// Given width, default modulus.
    pub fn with_width(a: f64, s: f64, delta: f64) -> Result<Self> {
        let p = GpeParams {
            a,
            s,
            n: default_modulus(s, delta),
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 0.1) {
            return Err(regime(format!("need 0 < delta <= 0.1, got {}", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.a) {
            return Err(regime(format!("need a in [0,1], got {}", self.a)));
        }
        let s_min = default_width(self.delta);
        if !(self.s >= s_min) {
            return Err(regime(format!(
                "need s >= 20*sqrt(2*log2(1/delta)) = {s_min:.4}, got {}",
                self.s
            )));
        }
        let n_min = 16.0 * self.s * (2.0 * (1.0 / self.delta).ln()).sqrt();
        if self.n % 2 == 1 || (self.n as f64) < n_min {
            return Err(regime(format!(
                "need N even and N >= 16*s*sqrt(2*ln(1/delta)) = {n_min:.1}, got {}",
                self.n
            )));
        }
        Ok(())
    }

    /// a′ = a/8 + 1/2.
    pub fn shifted_phase(&self) -> f64 {
        self.a / 8.0 + 0.5
    }

    /// Width N/(√2 s) of the outcome distribution around N·a′.
    pub fn outcome_width(&self) -> f64 {
        self.n as f64 / (std::f64::consts::SQRT_2 * self.s)
    }

    /// ν = frac(N·a′).
    pub fn nu(&self) -> f64 {
        let x = self.n as f64 * self.shifted_phase();
        x - x.floor()
    }

    /// ⌈s·log₂(s/δ)⌉ controlled-U applications.
    pub fn cost(&self) -> f64 {
        (self.s * (self.s / self.delta).log2()).ceil()
    }

    /// ã = 8y/N − 4.
    pub fn estimate_from_outcome(&self, y: u64) -> f64 {
        8.0 * y as f64 / self.n as f64 - 4.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpeResult {
    pub estimate: f64,
    pub y: u64,
    pub nu: f64,
    pub params: GpeParams,
}

/// Final phase-register state: amplitudes p_s(z)(−1)^z e^{πiaz/4} over
/// z ∈ {−N/2, …, N/2−1} (stored at z mod N), normalized, then QFT⁻¹.
pub fn gpe_final_state(p: &GpeParams) -> Result<PhaseRegister> {
    p.validate()?;
    let n = p.n as usize;
    let half = (n / 2) as i64;
    let mut amps = vec![C64::new(0.0, 0.0); n];
    for z in -half..half {
        let sign = if z.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let phase = C64::from_polar(1.0, PI * p.a * z as f64 / 4.0);
        amps[z.rem_euclid(n as i64) as usize] = phase * (sign * rho(p.s, z as f64));
    }
    Ok(inverse_qft(&PhaseRegister::normalized(amps)?))
}

/// Exact outcome distribution of y from the simulated state.
pub fn gpe_exact_distribution(p: &GpeParams) -> Result<Vec<f64>> {
    Ok(gpe_final_state(p)?.probabilities())
}

/// Predicted law of y: y − N·a′ ~ 𝒟_{ℤ−ν, N/(√2 s)}. Entry y holds the
/// predicted probability of outcome y; mass falling outside [0, N) is
/// returned separately.
pub fn gpe_predicted_distribution(p: &GpeParams) -> Result<(Vec<f64>, f64)> {
    p.validate()?;
    let sigma = p.outcome_width();
    let center = p.n as f64 * p.shifted_phase();
    let z = shifted_lattice_sum(sigma, p.nu());
    let probs: Vec<f64> = (0..p.n).map(|y| rho(sigma, y as f64 - center) / z).collect();
    let outside = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    Ok((probs, outside))
}

/// Σ_{j∈ℤ} p_σ(j − ν).
fn shifted_lattice_sum(sigma: f64, nu: f64) -> f64 {
    let m = nu.round();
    let mut total = rho(sigma, m - nu);
    let mut k = 1.0;
    loop {
        let term = rho(sigma, m + k - nu) + rho(sigma, m - k - nu);
        total += term;
        if term < 1e-18 * total {
            return total;
        }
        k += 1.0;
    }
}

/// Total variation between the simulated outcome law and the predicted
/// shifted discrete Gaussian, with no sampling.
pub fn gpe_exact_tv(p: &GpeParams) -> Result<f64> {
    let exact = gpe_exact_distribution(p)?;
    let (pred, outside) = gpe_predicted_distribution(p)?;
    Ok((exact.iter().zip(&pred).map(|(a, b)| (a - b).abs()).sum::<f64>() + outside) / 2.0)
}

/// How outcomes are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpeMode {
    /// Sample the simulated statevector (cost O(N log N) once per sampler).
    Statevector,
    /// Sample the closed-form outcome law directly; exact to machine precision.
    ClosedForm,
}

/// Reusable sampler for a fixed (a, s, N, δ).
#[derive(Debug, Clone)]
pub struct GpeSampler {
    params: GpeParams,
    cdf: Option<Vec<f64>>,
}

impl GpeSampler {
    pub fn new(params: GpeParams, mode: GpeMode) -> Result<Self> {
        params.validate()?;
        let cdf = match mode {
            GpeMode::ClosedForm => None,
            GpeMode::Statevector => {
                let probs = gpe_exact_distribution(&params)?;
                let mut run = 0.0;
                Some(
                    probs
                        .iter()
                        .map(|p| {
                            run += p;
                            run
                        })
                        .collect(),
                )
            }
        };
        Ok(GpeSampler { params, cdf })
    }

    pub fn params(&self) -> &GpeParams {
        &self.params
    }

    fn draw_y(&self, rng: &mut Rng) -> u64 {
        let p = &self.params;
        match &self.cdf {
            Some(cdf) => {
                let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u64
            }
            None => {
                let base = (p.n as f64 * p.shifted_phase()).floor() as i64;
                let j = sample_shifted(rng, p.outcome_width(), p.nu());
                (j + base).rem_euclid(p.n as i64) as u64
            }
        }
    }

    pub fn run(&self, rng: &mut Rng, ledger: &mut QueryLedger, subroutine: &str) -> Result<GpeResult> {
        let p = &self.params;
        ledger.charge(subroutine, Formula::GpeRun, Counter::ControlledUCalls, p.cost())?;
        let y = self.draw_y(rng);
        Ok(GpeResult {
            estimate: p.estimate_from_outcome(y),
            y,
            nu: p.nu(),
            params: *p,
        })
    }
}

/// One Gaussian phase estimation run.
pub fn gpe_run(params: GpeParams, mode: GpeMode, rng: &mut Rng, ledger: &mut QueryLedger) -> Result<GpeResult> {
    GpeSampler::new(params, mode)?.run(rng, ledger, "gpe")
}

/// Parameters used by the sub-Gaussian phase estimator: s = 4√2/ε raised
/// to the admissible minimum for δ = τ when needed.
pub fn subgpe_params(a: f64, eps: f64, tau: f64) -> Result<GpeParams> {
    if !(eps > 0.0 && eps <= 0.1) {
        return Err(regime(format!("need 0 < eps <= 0.1, got {eps}")));
    }
    if !(tau > 0.0 && tau <= 0.1) {
        return Err(regime(format!("need 0 < tau <= 0.1, got {tau}")));
    }
    let s = (4.0 * std::f64::consts::SQRT_2 / eps).max(default_width(tau));
    GpeParams::with_width(a, s, tau)
}

/// Estimate ã with ã − a close to τ-subG(ε²).
pub fn subgpe(a: f64, eps: f64, tau: f64, rng: &mut Rng, ledger: &mut QueryLedger, subroutine: &str) -> Result<f64> {
    let p = subgpe_params(a, eps, tau)?;
    Ok(GpeSampler::new(p, GpeMode::ClosedForm)?
        .run(rng, ledger, subroutine)?
        .estimate)
}

/// Fejér-kernel probability of outcome j on a grid of m points when the
/// true phase is x turns.
fn fejer(m: usize, j: usize, x: f64) -> f64 {
    let delta = j as f64 / m as f64 - x;
    let den = (PI * delta).sin();
    if den.abs() < 1e-300 {
        return 1.0;
    }
    let num = (m as f64 * PI * delta).sin();
    (num * num) / (m as f64 * m as f64 * den * den)
}

/// Odd repetition count r ≥ ln(1/δ)/(2·0.18²) for median amplification.
pub fn median_repetitions(delta: f64) -> usize {
    let r = ((1.0 / delta).ln() / (2.0 * 0.18 * 0.18)).ceil().max(1.0) as usize;
    r | 1
}

/// Amplitude estimation emulator: returns λ with |√p − λ| ≤ 1/M with
/// probability ≥ 1 − δ. Each repetition samples the phase-estimation
/// outcome on a grid of 8M points around θ/π, θ = arcsin√p; the output
/// is the median of sin(πj/(8M)) over the repetitions.
pub fn amp_estimate(
    p: f64,
    m: u64,
    delta: f64,
    rng: &mut Rng,
    ledger: &mut QueryLedger,
    subroutine: &str,
) -> Result<f64> {
    if m == 0 {
        return Err(invalid("M must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("probability {p} outside [0,1]")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta must lie in (0,1)"));
    }
    ledger.charge(
        subroutine,
        Formula::AmpEstimate,
        Counter::ControlledUCalls,
        m as f64 * (1.0 / delta).log2(),
    )?;
    let grid = 8 * m as usize;
    let x = p.sqrt().asin() / PI;
    let mut cdf = Vec::with_capacity(grid);
    let mut run = 0.0;
    for j in 0..grid {
        run += fejer(grid, j, x);
        cdf.push(run);
    }
    let total = run;
    let reps = median_repetitions(delta);
    let mut outs: Vec<f64> = (0..reps)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            let j = cdf.partition_point(|&c| c <= u).min(grid - 1);
            (PI * j as f64 / grid as f64).sin()
        })
        .collect();
    Ok(median(&mut outs))
}
