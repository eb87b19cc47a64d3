//! Named, independent RNG streams derived from one master seed.
//!
//! Every randomized subsystem (splitting, partitioning, per-client training,
//! noise injection, ...) draws from its own stream, keyed by a label plus
//! integer indices. Adding a new stream never perturbs existing ones, and
//! results are independent of the order in which streams are consumed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut x = z;
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable hash of (master, label, indices) into a 64-bit stream seed.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ 0xA076_1D64_78BD_642F);
    h = splitmix64(h ^ label.len() as u64);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    for &ix in indices {
        h = splitmix64(h ^ ix.wrapping_add(1));
    }
    h
}

/// A fresh deterministic RNG for the given stream.
pub fn stream_rng(master: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, indices))
}
