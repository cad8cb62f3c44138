//! Deterministic per-unit random streams.
//!
//! Every Monte Carlo unit (frame or block) draws from its own generator,
//! seeded from `(seed, stream, index)`, so results do not depend on how the
//! units are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn unit_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(seed ^ splitmix64(stream ^ splitmix64(index)));
    ChaCha8Rng::seed_from_u64(mixed)
}
