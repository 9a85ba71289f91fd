use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use qpower_bench::{hard_instance, mixed_vector, rng, unit_vector};
use qpower_core::dgauss::{DiscreteGaussianSpec, PmfTable};
use qpower_core::eigensolver::{ipe_matvec, IpeConfig};
use qpower_core::kptree::KPTree;
use qpower_core::phase::{amp_estimate, GpeMode, GpeParams, GpeSampler};
use qpower_core::spectral::eigendecompose;
use qpower_core::tomography::unbiased_tomography;
use qpower_core::QueryLedger;

fn kp_tree(c: &mut Criterion) {
    let mut g = c.benchmark_group("kp_tree_build");
    for d in [256usize, 4096] {
        let v = unit_vector(d);
        g.bench_with_input(BenchmarkId::from_parameter(d), &v, |b, v| {
            b.iter(|| KPTree::build(black_box(v)))
        });
    }
    g.finish();
}

fn gpe(c: &mut Criterion) {
    let p = GpeParams::defaults(0.3, 0.01).unwrap();
    let mut g = c.benchmark_group("gpe_sample");
    for (name, mode) in [
        ("closed_form", GpeMode::ClosedForm),
        ("statevector", GpeMode::Statevector),
    ] {
        let sampler = GpeSampler::new(p, mode).unwrap();
        let mut r = rng("gpe");
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut ledger = QueryLedger::compact();
                sampler.run(&mut r, &mut ledger, "bench").unwrap().estimate
            })
        });
    }
    g.finish();
    c.bench_function("gpe_statevector_setup", |b| {
        b.iter(|| GpeSampler::new(black_box(p), GpeMode::Statevector))
    });
}

fn amplitude(c: &mut Criterion) {
    let mut r = rng("amp");
    c.bench_function("amp_estimate_m1024", |b| {
        b.iter(|| {
            let mut ledger = QueryLedger::compact();
            amp_estimate(black_box(0.3), 1024, 0.01, &mut r, &mut ledger, "bench").unwrap()
        })
    });
}

fn pmf(c: &mut Criterion) {
    let spec = DiscreteGaussianSpec::full(0.3, 40.0);
    c.bench_function("pmf_table_s40", |b| {
        b.iter(|| PmfTable::build(black_box(&spec)).unwrap())
    });
}

fn ipe(c: &mut Criterion) {
    let d = 64;
    let inst = hard_instance(d);
    let w = mixed_vector(d);
    let cfg = IpeConfig::new(1e-4, 1e-3, 0.01).unwrap();
    let mut r = rng("ipe");
    c.bench_function("ipe_matvec_d64", |b| {
        b.iter(|| {
            let mut ledger = QueryLedger::compact();
            ipe_matvec(&inst.matrix, black_box(&w), &cfg, &mut r, &mut ledger).unwrap()
        })
    });
}

fn tomography(c: &mut Criterion) {
    let psi = unit_vector(32);
    let mut r = rng("tomography");
    c.bench_function("unbiased_tomography_d32", |b| {
        b.iter(|| {
            let mut ledger = QueryLedger::compact();
            unbiased_tomography(black_box(&psi), 0.1, 0.1, 32, &mut r, &mut ledger).unwrap()
        })
    });
}

fn eigen(c: &mut Criterion) {
    let inst = hard_instance(128);
    c.bench_function("eigendecompose_d128", |b| {
        b.iter(|| eigendecompose(black_box(&inst.matrix)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = kp_tree, gpe, amplitude, pmf, ipe, tomography, eigen
}
criterion_main!(benches);
