//! Seeded random streams with one independent substream per path.
//!
//! Path `m` of a simulation always consumes stream `m` of a ChaCha8 generator
//! keyed by the run seed, so its draws do not depend on the total number of
//! paths or on the order in which worker threads pick paths up.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Purpose tags that separate otherwise identical (seed, path) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Volterra = 0,
    Orthogonal = 1,
    VixCholesky = 2,
}

pub fn path_rng(seed: u64, stream: Stream, path: usize) -> ChaCha8Rng {
    // Mix the purpose tag into the key so distinct purposes never share a stream.
    let key = seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(path as u64);
    rng
}

#[inline]
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Pairwise summation, deterministic for a given slice.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 32 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

/// Sample mean and its standard error.
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(x) / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = x.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}
