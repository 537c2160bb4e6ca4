//! Named, independently reproducible random streams derived from one seed.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes `base`, a stream name and an index into a new seed.
pub fn derive_seed(base: u64, stream: &str, index: u64) -> u64 {
    let mut h = FnvHasher::default();
    h.write(stream.as_bytes());
    let mut z = base ^ h.finish().rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(base: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, name, index))
}
