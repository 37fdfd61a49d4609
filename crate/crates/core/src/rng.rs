//! Seeded random streams.
//!
//! Every stochastic operation takes its generator explicitly. Independent
//! streams (per epoch, per speaker, per task) are derived from one 64-bit seed
//! by selecting a ChaCha stream, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a stream identified by `tags` from `seed`.
pub fn stream(seed: u64, tags: &[u64]) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut id = 0x9e37_79b9_7f4a_7c15_u64;
    for &t in tags {
        id = splitmix64(id ^ t);
    }
    rng.set_stream(id);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
