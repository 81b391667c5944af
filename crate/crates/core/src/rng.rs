//! Deterministic per-path random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator handed to every sampling routine.
pub type PathRng = ChaCha8Rng;

/// Stream domains keep unrelated draws for the same path index apart.
pub mod domain {
    pub const INCREMENTS: u64 = 1;
    pub const SERIES: u64 = 2;
    pub const BRIDGE: u64 = 3;
    pub const Q_WIENER: u64 = 4;
    pub const PROBES: u64 = 5;
}

/// Maps `(master seed, domain, path index)` to an independent ChaCha stream.
///
/// The same triple always reproduces the same stream bit for bit. Distinct
/// path indices select distinct ChaCha stream ids under one key, so draws
/// for different paths never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RngPolicy {
    pub master_seed: u64,
}

impl RngPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn stream(&self, domain: u64, index: u64) -> PathRng {
        let key = splitmix64(self.master_seed ^ splitmix64(domain.wrapping_add(0x5851_f42d_4c95_7f2d)));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(index);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
