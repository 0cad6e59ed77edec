//! Named sub-seeds so each stage draws from its own reproducible stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives a stage seed from the top-level seed and a stage name.
pub fn sub_seed(seed: u64, stage: &str) -> u64 {
    // FNV-1a over the name, then a splitmix64 finalizer mixing in the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stage_rng(seed: u64, stage: &str) -> ChaCha8Rng {
    rng(sub_seed(seed, stage))
}
