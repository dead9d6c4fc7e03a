//! Deterministic seed derivation.
//!
//! Every stochastic draw in a run comes from a ChaCha stream whose seed is
//! derived from a tuple of integers, e.g. `(run_seed, step, context slot, i)`.
//! Streams are independent of the order in which they are consumed, which is
//! what lets trajectories be generated in parallel without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

/// Stream labels keep different consumers of the same indices apart.
pub mod stream {
    pub const CONTEXTS: u64 = 0x01;
    pub const TRAJECTORY: u64 = 0x02;
    pub const GROUP_NOISE: u64 = 0x03;
    pub const EVAL: u64 = 0x04;
    pub const PRETRAIN: u64 = 0x05;
    pub const INIT: u64 = 0x06;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes an ordered list of integers into a single 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(parts))
}

pub fn standard_normal_vec(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}
