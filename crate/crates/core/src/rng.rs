//! Seeded random streams.
//!
//! Every consumer derives its own ChaCha8 stream from `(seed, stream id)`, so
//! generation order never depends on how work is scheduled.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, Normal, StandardUniform};

pub type SeededRng = ChaCha8Rng;

/// Stream-id namespaces; the low 40 bits carry a per-item index.
pub mod streams {
    pub const MODEL: u64 = 1 << 40;
    pub const ANNOTATED: u64 = 2 << 40;
    pub const WILD: u64 = 3 << 40;
    pub const EVAL: u64 = 4 << 40;
    pub const NETWORK_INIT: u64 = 5 << 40;
    pub const TRAINING: u64 = 6 << 40;
    pub const GRAD_CHECK: u64 = 7 << 40;
}

pub fn stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = StandardUniform.sample(rng);
    lo + (hi - lo) * u
}

pub fn normal<R: RngCore + ?Sized>(rng: &mut R, mean: f64, std_dev: f64) -> f64 {
    if std_dev == 0.0 {
        return mean;
    }
    // std_dev > 0 and finite is checked by config validation upstream
    Normal::new(mean, std_dev)
        .map(|d| d.sample(rng))
        .unwrap_or(f64::NAN)
}

/// Uniform integer in `[0, bound)` by widening multiply.
pub fn below<R: RngCore + ?Sized>(rng: &mut R, bound: usize) -> usize {
    debug_assert!(bound > 0);
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

pub fn shuffle<R: RngCore + ?Sized, T>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}

pub fn bernoulli<R: RngCore + ?Sized>(rng: &mut R, p: f64) -> bool {
    if p <= 0.0 {
        return false;
    }
    uniform(rng, 0.0, 1.0) < p
}
