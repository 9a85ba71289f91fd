//! Fixed inputs shared by the kernel benchmarks.

use qpower_core::rng::{labeled_stream, Rng};
use qpower_core::spectral::{gen_hard_instance, random_unit_vector, HardInstance};
use qpower_core::{CVector, C64};

pub const SEED: u64 = 2024;

pub fn rng(label: &str) -> Rng {
    labeled_stream(SEED, label, 0)
}

pub fn hard_instance(d: usize) -> HardInstance {
    gen_hard_instance(d, SEED).expect("d >= 4")
}

pub fn unit_vector(d: usize) -> CVector {
    random_unit_vector(d, &mut rng("unit-vector"))
}

/// A unit vector with a few heavy entries and a flat tail, so IPE has
/// both large and small parts.
pub fn mixed_vector(d: usize) -> CVector {
    let mut v = CVector::from_element(d, C64::new(1.0, 0.0));
    for i in 0..d.min(4) {
        v[i] = C64::new((d as f64).sqrt(), 0.0);
    }
    let n = v.norm();
    v / C64::new(n, 0.0)
}
