//! Reproducible per-trajectory random streams.
//!
//! Each trajectory owns a ChaCha8 stream keyed by a hash of the master seed and
//! its index, so results do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrajectoryRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of trajectory `index` under `master_seed`.
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index ^ 0xA076_1D64_78BD_642F))
}

pub fn trajectory_rng(master_seed: u64, index: u64) -> TrajectoryRng {
    ChaCha8Rng::seed_from_u64(trajectory_seed(master_seed, index))
}

/// Generator for auxiliary draws (subsampling, random restarts) tied to a purpose tag.
pub fn auxiliary_rng(master_seed: u64, tag: &str) -> TrajectoryRng {
    let h = tag
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325_u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01B3));
    ChaCha8Rng::seed_from_u64(splitmix64(master_seed.rotate_left(17) ^ h))
}
