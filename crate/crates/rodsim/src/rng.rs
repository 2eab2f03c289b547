//! Reproducible per-rod random streams.
//!
//! Every rod (or other named consumer) draws from its own counter-based
//! stream derived from the master seed and a stream index, so results do not
//! depend on how many rods exist, which thread touched which rod, or the
//! order anything was generated in.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Weyl increment of the SplitMix64 generator.
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a cheap bijective avalanche on 64 bits.
fn mix(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// An independent random stream for `(master_seed, stream)`.
///
/// The pair is hashed to a 64-bit key, which is expanded to the generator's
/// full 256-bit seed by walking the SplitMix64 sequence from that key.
pub fn stream(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let key = mix(master_seed ^ mix(stream.wrapping_add(GAMMA)));
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
        let word = mix(key.wrapping_add((i as u64 + 1).wrapping_mul(GAMMA)));
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
