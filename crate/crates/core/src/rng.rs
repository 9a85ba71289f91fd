//! Seeded random streams. Every experiment expands one master seed into
//! independent per-trial streams so that trials can run in any order.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Rng;
use sha2::{Digest, Sha256};

/// Stream `index` of the master seed `master`.
pub fn stream(master: u64, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// A child stream keyed by a label, for sub-experiments sharing one master seed.
pub fn labeled_stream(master: u64, label: &str, index: u64) -> Rng {
    let digest = Sha256::digest(label.as_bytes());
    let mut key = [0u8; 8];
    key.copy_from_slice(&digest[..8]);
    stream(master ^ u64::from_le_bytes(key), index)
}
