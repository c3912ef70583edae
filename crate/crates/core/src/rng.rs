//! Seeded generators. Every random draw in a run descends from one `u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type EngineRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> EngineRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for a tree node, a function of the run seed and the node path only,
/// so sibling subtrees can be expanded in any order or in parallel.
pub fn derive_seed(run_seed: u64, path: &[u32], round: u32) -> u64 {
    let mut h = splitmix64(run_seed);
    for &step in path {
        h = splitmix64(h ^ u64::from(step).wrapping_add(1));
    }
    // Separates the path from the round so ("0", round 1) != ("0.0", round 0).
    h = splitmix64(h ^ 0xA5A5_A5A5_0000_0000 ^ u64::from(path.len() as u32));
    splitmix64(h ^ u64::from(round))
}
