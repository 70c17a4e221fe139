//! Seed derivation. Every random draw in the crate comes from a ChaCha stream
//! keyed by a 64-bit seed and a stream id, so replications can be generated in
//! any order and still produce identical bytes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used by the generators. Separate streams keep the design,
/// noise, signal and contamination draws independent of each other.
pub mod stream {
    pub const DESIGN: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const SIGNAL: u64 = 3;
    pub const CONTAMINATION: u64 = 4;
    pub const PROBES: u64 = 5;
    pub const ALT_NOISE: u64 = 6;
    pub const ALT_CONTAMINATION: u64 = 7;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a sequence of words.
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(mix64(master), |acc, &w| mix64(acc ^ mix64(w)))
}

/// FNV-1a, used to fold strings into seed words.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
