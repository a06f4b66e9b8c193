//! Seeded random sources and hierarchical seed derivation.
//!
//! Every random stream in an experiment is keyed by a path of integers
//! `(master, component, component, ...)`. A path is folded through the
//! SplitMix64 finaliser, so any single run can be reproduced in isolation and
//! adding a policy never perturbs the streams of the others (policies are keyed
//! by a stable id, not by their position in the list).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout. ChaCha8 output is stable across platforms
/// and crate versions, unlike `StdRng`.
pub type SimRng = ChaCha8Rng;

/// Stream roles mixed into the seed path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Model = 1,
    Stream = 2,
    PolicyInit = 3,
    Proposal = 4,
    Noise = 5,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into a single 64-bit seed rooted at `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng_for(master: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, path))
}

/// Stable 64-bit id for a string key (FNV-1a).
pub fn stable_id(key: &str) -> u64 {
    key.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
