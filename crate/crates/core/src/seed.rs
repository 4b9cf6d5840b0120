//! Deterministic seed derivation.
//!
//! All randomness in the pipeline flows from one root seed. Components
//! (vocabulary init, per-fold training, synthetic generation, ...) draw their
//! own RNG from `derive(root, stream)` so that adding consumers never shifts
//! the streams of existing ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Derive a child seed from a root seed and a stream id (splitmix64 mix).
pub fn derive(root: u64, stream: u64) -> u64 {
    let mut z = root ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for a derived stream.
pub fn rng(root: u64, stream: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(root, stream))
}
