//! Per-replica random streams.
//!
//! Every replica owns a ChaCha stream keyed by `(seed, replica)`, so results do
//! not depend on how replicas are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

pub type SimRng = ChaCha8Rng;

pub fn stream(seed: u64, replica: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

#[inline]
pub fn normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
pub fn exponential(rng: &mut SimRng) -> f64 {
    rng.sample(Exp1)
}

/// Uniform on `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut SimRng) -> f64 {
    rng.random::<f64>()
}

pub fn fill_normal(rng: &mut SimRng, out: &mut [f64]) {
    for v in out {
        *v = normal(rng);
    }
}
