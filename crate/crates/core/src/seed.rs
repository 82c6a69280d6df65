//! Deterministic seed derivation and the crate-wide RNG.
//!
//! All randomness goes through [`ChaCha8Rng`] seeded with `seed_from_u64`;
//! normal variates use `rand_distr::StandardNormal` (ziggurat). Sub-seeds are
//! derived as `splitmix64(master ^ fnv1a64(label))`, where `label` is the
//! `/`-joined stage, replicate and method. Derivation is independent of
//! scheduling, so parallel and sequential runs produce identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a (stage, replicate, method) cell of a run.
pub fn derive_seed(master: u64, stage: &str, replicate: usize, method: &str) -> u64 {
    let label = format!("{stage}/{replicate}/{method}");
    splitmix64(master ^ fnv1a64(label.as_bytes()))
}

/// Seed for the `index`-th unit (tree, imputation, ...) below `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}
