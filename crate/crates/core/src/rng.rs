//! Seeded randomness.
//!
//! Plans draw from ChaCha8 seeded through `SeedableRng::seed_from_u64`, which
//! is specified bit-for-bit by `rand_core` and independent of platform word
//! size. Integer draws always go through `u64`/`u128` ranges for the same
//! reason. Gaussian noise uses the polar method on top of the same stream with
//! the pure-Rust `libm` logarithm, so synthetic timings are bit-identical
//! across platforms.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type PlanRng = ChaCha8Rng;

pub fn plan_rng(seed: u64) -> PlanRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one well-mixed seed.
pub fn combine(words: &[u64]) -> u64 {
    words.iter().fold(0x6a09_e667_f3bc_c908, |acc, &w| {
        mix64(acc ^ mix64(w.wrapping_add(0x9e37_79b9_7f4a_7c15)))
    })
}

/// Sub-seed for iteration `index` of an experiment seeded by `master`.
pub fn sub_seed(master: u64, index: u64) -> u64 {
    combine(&[master, index])
}

/// FNV-1a, used to fold identifiers into seeds.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn uniform_below(rng: &mut PlanRng, bound: u64) -> u64 {
    rng.random_range(0..bound)
}

pub fn uniform_below_u128(rng: &mut PlanRng, bound: u128) -> u128 {
    rng.random_range(0..bound)
}

/// Standard normal variate truncated to `[-limit, limit]` by rejection.
pub fn truncated_normal(rng: &mut PlanRng, limit: f64) -> f64 {
    loop {
        // Polar method: u, v uniform on (-1, 1) with 53-bit resolution.
        let u = 2.0 * unit(rng) - 1.0;
        let v = 2.0 * unit(rng) - 1.0;
        let s = u * u + v * v;
        if s == 0.0 || s >= 1.0 {
            continue;
        }
        let z = u * (-2.0 * libm::log(s) / s).sqrt();
        if z.abs() <= limit {
            return z;
        }
    }
}

fn unit(rng: &mut PlanRng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
