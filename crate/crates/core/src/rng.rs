//! Seeded random streams. Every stochastic step in the crate draws from a
//! ChaCha8 stream so runs are reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a named sub-task of a seeded run.
pub fn derive(seed: u64, salt: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn below(rng: &mut StreamRng, n: usize) -> usize {
    rng.random_range(0..n)
}

pub fn shuffle<T>(rng: &mut StreamRng, items: &mut [T]) {
    use rand::seq::SliceRandom;
    items.shuffle(rng);
}
