//! Property tests for the structural invariants of each module.

use proptest::prelude::*;
use qpower_core::dgauss::{check_subgaussian, default_t_grid, DiscreteGaussianSpec, PmfTable};
use qpower_core::eigensolver::{qnpm, subspace_tomography, tangent, QnpmParams, StepTomography, SubspaceConfig};
use qpower_core::harness::runners::random_projector;
use qpower_core::phase::{gpe_run, inverse_qft, qft, GpeMode, GpeParams, PhaseRegister};
use qpower_core::rng::stream;
use qpower_core::spectral::{
    eigendecompose, gaussian_matrix, op_norm, random_unit_vector, singular_projector, singular_values, trace_norm,
    with_spectrum,
};
use qpower_core::stats::{rate_at_least, rate_at_most};
use qpower_core::tomography::{check_reference, reference_from_magnitudes, single_sample_estimator, Branch};
use qpower_core::{CMatrix, CVector, Counter, Field, Formula, HermitianMatrix, QueryLedger, C64};

fn field(complex: bool) -> Field {
    if complex {
        Field::Complex
    } else {
        Field::Real
    }
}

fn hermitian(d: usize, f: Field, seed: u64) -> HermitianMatrix {
    let g = gaussian_matrix(d, d, f, &mut stream(seed, 0));
    HermitianMatrix::symmetrized(g * C64::new(1.0 / (d as f64).sqrt(), 0.0)).unwrap()
}

fn unit_state(d: usize, seed: u64) -> CVector {
    let g = gaussian_matrix(d, 1, Field::Complex, &mut stream(seed, 1))
        .column(0)
        .into_owned();
    &g / C64::new(g.norm(), 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decomposition_is_orthonormal_sorted_and_reconstructs(d in 1usize..24, complex: bool, seed: u64) {
        let a = hermitian(d, field(complex), seed);
        let dec = eigendecompose(&a).unwrap();
        let v = &dec.eigenvectors;
        let gram = v.adjoint() * v - CMatrix::identity(d, d);
        prop_assert!(gram.camax() <= 1e-10);
        prop_assert!(op_norm(&(a.to_complex() - dec.reconstruct())) <= 1e-8 * d as f64);
        for w in dec.eigenvalues.as_slice().windows(2) {
            prop_assert!(w[0].abs() >= w[1].abs());
        }
    }

    #[test]
    fn weyl_singular_value_perturbation(rows in 2usize..12, cols in 2usize..12, scale in 1e-3f64..1.0, seed: u64) {
        let mut rng = stream(seed, 2);
        let a = gaussian_matrix(rows, cols, Field::Complex, &mut rng);
        let b = &a + gaussian_matrix(rows, cols, Field::Complex, &mut rng) * C64::new(scale, 0.0);
        let gap = op_norm(&(&a - &b));
        for (x, y) in singular_values(&a).iter().zip(singular_values(&b)) {
            prop_assert!((x - y).abs() <= gap + 1e-9);
        }
    }

    #[test]
    fn wedin_sin_theta(d in 3usize..12, alpha in 0.2f64..1.5, delta in 0.05f64..1.0, scale in 1e-3f64..0.5, seed: u64) {
        let mut rng = stream(seed, 3);
        let a = gaussian_matrix(d, d, Field::Real, &mut rng);
        let b = &a + gaussian_matrix(d, d, Field::Real, &mut rng) * C64::new(scale, 0.0);
        let pa = singular_projector(&a, alpha, false);
        let pb = singular_projector(&b, alpha + delta, true);
        let lhs = op_norm(&((CMatrix::identity(d, d) - pa) * pb));
        prop_assert!(lhs <= op_norm(&(&a - &b)) / delta + 1e-9);
    }

    #[test]
    fn equal_rank_projector_norms(d in 2usize..16, r_frac in 0.0f64..1.0, complex: bool, seed: u64) {
        let r = 1 + ((d - 1) as f64 * r_frac) as usize;
        let f = field(complex);
        let p = random_projector(d, r, f, &mut stream(seed, 4));
        let q = random_projector(d, r, f, &mut stream(seed, 5));
        let id = CMatrix::identity(d, d);
        let diff = op_norm(&(&p - &q));
        prop_assert!((diff - op_norm(&(&p * (&id - &q)))).abs() <= 1e-9);
        prop_assert!((diff - op_norm(&((&id - &p) * &q))).abs() <= 1e-9);
        let tr = trace_norm(&(&p - &q));
        prop_assert!(tr / (2.0 * r as f64) <= diff + 1e-9);
        prop_assert!(diff <= tr / 2.0 + 1e-9);
    }

    #[test]
    fn pmf_tables_are_normalized(c in -3.0f64..3.0, s in 0.3f64..40.0, lattice in 0.25f64..3.0, variant in 0u8..3, extent in 0.0f64..30.0) {
        let spec = match variant {
            0 => DiscreteGaussianSpec::full(c, s),
            1 => DiscreteGaussianSpec::truncated(c, s, extent, extent / 2.0),
            _ => DiscreteGaussianSpec::modular(c, s, 2 * (1 + extent as u64)),
        }
        .with_lattice(lattice);
        let table = PmfTable::build(&spec).unwrap();
        let total: f64 = table.iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn certified_tails_are_gaussian(s in 1.5f64..20.0, tau in 0.01f64..0.5) {
        let table = PmfTable::build(&DiscreteGaussianSpec::full(0.0, s)).unwrap();
        let cert = check_subgaussian(&table, s, tau, None);
        prop_assert!(cert.valid());
        for t in [0.5 * s, s, 2.0 * s, 3.0 * s] {
            let tail: f64 = table.iter().filter(|&(k, _)| table.value(k).abs() > t).map(|(_, p)| p).sum();
            let bound = 2.0 * tau.exp() * (-t * t / (2.0 * s * s)).exp();
            prop_assert!(tail <= bound);
        }
    }

    #[test]
    fn weighted_sums_stay_subgaussian(s1 in 2.0f64..6.0, s2 in 2.0f64..6.0, a1 in -1.0f64..1.0, a2 in -1.0f64..1.0) {
        let tau = 0.1;
        let t1 = PmfTable::build(&DiscreteGaussianSpec::full(0.0, s1)).unwrap();
        let t2 = PmfTable::build(&DiscreteGaussianSpec::full(0.0, s2)).unwrap();
        prop_assert!(check_subgaussian(&t1, s1, tau, None).valid());
        prop_assert!(check_subgaussian(&t2, s2, tau, None).valid());
        // law of a1·X1 + a2·X2 by explicit convolution
        let mut sum: Vec<(f64, f64)> = Vec::new();
        for (k1, p1) in t1.iter() {
            for (k2, p2) in t2.iter() {
                sum.push((a1 * t1.value(k1) + a2 * t2.value(k2), p1 * p2));
            }
        }
        let alpha = ((a1 * s1).powi(2) + (a2 * s2).powi(2)).sqrt().max(1e-6);
        for t in default_t_grid(alpha).into_iter().flat_map(|t| [t, -t]) {
            let m = sum.iter().map(|&(x, p)| t * x + p.ln()).fold(f64::NEG_INFINITY, f64::max);
            let log_mgf = m + sum.iter().map(|&(x, p)| (t * x + p.ln() - m).exp()).sum::<f64>().ln();
            prop_assert!(log_mgf <= 2.0 * tau + alpha * alpha * t * t / 2.0 + 1e-9);
        }
    }

    #[test]
    fn qft_is_unitary(n in 1usize..64, seed: u64) {
        let amps: Vec<C64> = unit_state(n, seed).iter().copied().collect();
        let reg = PhaseRegister::new(amps.clone()).unwrap();
        let f = qft(&reg);
        let norm: f64 = f.amplitudes().iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() <= 1e-10);
        let back = inverse_qft(&f);
        for (x, y) in back.amplitudes().iter().zip(&amps) {
            prop_assert!((x - y).norm() <= 1e-10);
        }
    }

    #[test]
    fn gpe_estimate_is_rescaled_outcome(a in 0.0f64..1.0, delta in 0.01f64..0.1, statevector: bool, seed: u64) {
        let params = GpeParams::defaults(a, delta).unwrap();
        let mode = if statevector { GpeMode::Statevector } else { GpeMode::ClosedForm };
        let res = gpe_run(params, mode, &mut stream(seed, 6), &mut QueryLedger::compact()).unwrap();
        prop_assert!(res.y < params.n);
        prop_assert_eq!(res.estimate, 8.0 * res.y as f64 / params.n as f64 - 4.0);
    }

    #[test]
    fn ledger_totals_grow_and_match_report(charges in prop::collection::vec((0usize..4, 0.0f64..1e6), 1..40)) {
        let counters = [Counter::MatrixQueries, Counter::KpReads, Counter::ControlledUCalls, Counter::ElementaryGates];
        let mut ledger = QueryLedger::new();
        let mut last = [0u64; 4];
        for (i, amount) in charges {
            ledger.charge(["a", "b"][i % 2], Formula::Classical, counters[i], amount).unwrap();
            for (j, c) in counters.iter().enumerate() {
                let now = ledger.total(*c);
                prop_assert!(now >= last[j]);
                last[j] = now;
            }
        }
        for c in counters {
            let from_report: u64 = ledger.report().iter().filter(|r| r.counter == c).map(|r| r.total).sum();
            prop_assert_eq!(from_report, ledger.total(c));
        }
    }

    #[test]
    fn reference_state_meets_hypothesis(d in 1usize..32, sub in 0.1f64..1.0, seed: u64) {
        let psi = unit_state(d, seed) * C64::new(sub, 0.0);
        let mag = psi.map(|z| z.norm());
        let bar = reference_from_magnitudes(&mag);
        prop_assert!(check_reference(&psi, &bar, 0.5, 0.25).is_ok());
    }

    #[test]
    fn single_sample_norm_is_bounded(d in 1usize..16, imag: bool, seed: u64) {
        let psi = unit_state(d, seed);
        let bar = reference_from_magnitudes(&psi.map(|z| z.norm()));
        let floor = bar.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        let branch = if imag { Branch::Imag } else { Branch::Real };
        let mut rng = stream(seed, 7);
        for _ in 0..50 {
            prop_assert!(single_sample_estimator(&psi, &bar, branch, &mut rng).norm() <= 1.0 / floor + 1e-12);
        }
    }
}

#[test]
fn okamoto_hoeffding_oracle() {
    let mut rng = stream(8, 0);
    let reps = 4000u64;
    for (p, n, eps) in [(0.05, 200u64, 0.05), (0.3, 100, 0.08), (0.7, 400, 0.03)] {
        let mut hits = 0;
        for _ in 0..reps {
            let k = (0..n).filter(|_| rand::Rng::random::<f64>(&mut rng) < p).count() as f64;
            if (k / n as f64).sqrt() >= p.sqrt() + eps {
                hits += 1;
            }
        }
        let bound = (-2.0 * eps * eps * n as f64).exp();
        assert!(rate_at_most(hits, reps, bound), "p={p} n={n}: {hits}/{reps} vs {bound}");
    }
}

#[test]
fn random_starts_clear_the_overlap_floor() {
    for d in [10usize, 100, 1000] {
        let mut rng = stream(9, d as u64);
        let e1 = CVector::from_fn(d, |i, _| C64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0));
        let trials = 2000u64;
        let good = (0..trials)
            .filter(|_| random_unit_vector(d, &mut rng).dotc(&e1).norm() >= 1.0 / (10.0 * (d as f64).sqrt()))
            .count() as u64;
        assert!(rate_at_least(good, trials, 0.9), "d={d}: {good}/{trials}");
    }
}

#[test]
fn error_free_subspace_iterates_are_well_conditioned() {
    let (d, q) = (64, 3);
    let mut sc = SubspaceConfig::new(q, 0.1, 0.2, Field::Real).unwrap();
    sc.tomography = StepTomography::Exact;
    let trials = 200u64;
    let mut good = 0;
    for t in 0..trials {
        let mut rng = stream(10, t);
        let pi = random_projector(d, q, Field::Real, &mut rng);
        let run = subspace_tomography(&pi, &sc, &mut rng, &mut QueryLedger::compact()).unwrap();
        let sv = run.ideal_singular_values();
        if sv.len() == q && sv.iter().all(|&s| s > 1.0 / 7.0 && s < 1.0) {
            good += 1;
        }
    }
    assert!(rate_at_least(good, trials, 0.9), "{good}/{trials}");
}

#[test]
fn qnpm_products_meet_noise_bounds() {
    let d = 32;
    let mut spectrum = vec![0.1; d];
    spectrum[0] = 0.9;
    spectrum[1] = 0.5;
    let (gamma, eps) = (0.4, 0.2);
    let a = with_spectrum(&spectrum, &mut stream(11, 0));
    let v1 = eigendecompose(&a).unwrap().vector(0);
    let params = QnpmParams::new(d, gamma, eps, 0.9).unwrap();
    let (mut total, mut within) = (0u64, 0u64);
    for t in 0..4 {
        let run = qnpm(
            &a,
            &params,
            Some(&v1),
            &mut stream(11, t + 1),
            &mut QueryLedger::compact(),
        )
        .unwrap();
        for (norm, ov) in run.noise_norms.iter().zip(&run.noise_overlaps) {
            total += 1;
            if *norm <= gamma * eps / 5.0 && *ov <= gamma / (50.0 * (d as f64).sqrt()) {
                within += 1;
            }
        }
        assert!(tangent(&run.w, &v1) < 1.0);
    }
    let k = params.iterations as f64;
    assert!(
        rate_at_least(within, total, 1.0 - 1.0 / (100.0 * k)),
        "{within}/{total}"
    );
}
