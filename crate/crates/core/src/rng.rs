//! Seeded random streams.
//!
//! The chain draws sequential steps from one generator. Work that may run on
//! several threads takes a stream derived from the chain seed and a tag
//! tuple, so its draws do not depend on scheduling.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type ChainRng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> ChainRng {
    ChainRng::seed_from_u64(seed)
}

/// Independent stream for `(seed, tags...)`.
pub fn derive(seed: u64, tags: &[u64]) -> ChainRng {
    let mut h = splitmix(seed ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        h = splitmix(h ^ t.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    ChainRng::seed_from_u64(h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
