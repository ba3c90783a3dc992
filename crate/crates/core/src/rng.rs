//! Seed derivation helpers.
//!
//! Every stochastic operation takes an explicit `u64` seed. Loops derive
//! sub-seeds from a master seed so that adding a new consumer of randomness
//! never shifts the streams seen by existing consumers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finaliser; decorrelates nearby seeds.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `purpose` within loop iteration `iteration` of a run seeded by `master`.
pub fn iteration_seed(master: u64, iteration: usize, purpose: u64) -> u64 {
    mix((master ^ iteration as u64).wrapping_add(mix(purpose)))
}

/// Seed for a per-item stream (e.g. MC passes for sample `item`).
pub fn item_seed(base: u64, item: u64) -> u64 {
    mix(base ^ mix(item))
}
