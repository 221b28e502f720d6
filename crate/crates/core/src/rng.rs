//! Deterministic seed splitting.
//!
//! One root seed per experiment is split into independent substreams keyed by
//! `(run, purpose, agent, arm, ...)`. Substreams never share state, so adding or
//! removing a consumer (an adversary, a softmax sampler) leaves every other
//! stream untouched. This is what makes paired policy comparisons use common
//! random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a substream is used for. The discriminant is part of the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Run = 1,
    Reward = 2,
    Policy = 3,
    Attack = 4,
    ByzantinePull = 5,
    Graph = 6,
    Environment = 7,
    Kappa = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a key path. Stable across platforms
/// and releases.
pub fn derive_seed(parent: u64, key: &[u64]) -> u64 {
    let mut h = splitmix64(parent ^ 0x5851_F42D_4C95_7F2D);
    for &part in key {
        h = splitmix64(h ^ splitmix64(part.wrapping_add(0x2545_F491_4F6C_DD1D)));
    }
    h
}

/// Seed for the `run`-th independent simulation under `root`.
pub fn run_seed(root: u64, run: u64) -> u64 {
    derive_seed(root, &[Purpose::Run as u64, run])
}

/// Opens the substream for `purpose` under `seed` with extra key parts.
pub fn stream(seed: u64, purpose: Purpose, key: &[u64]) -> StreamRng {
    let mut full = Vec::with_capacity(key.len() + 1);
    full.push(purpose as u64);
    full.extend_from_slice(key);
    StreamRng::seed_from_u64(derive_seed(seed, &full))
}
