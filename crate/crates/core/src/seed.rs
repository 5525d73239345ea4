//! Seed derivation for reproducible randomized steps.
//!
//! Every randomized operation takes a plain `u64` seed and builds its own
//! ChaCha8 stream. Child seeds for trials, anonymity levels and draws are
//! derived from a master seed with [`derive`], so results never depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(stream, index)` under `master`.
///
/// `derive(m, s, i) = mix64(mix64(mix64(m) ^ s) ^ i)`.
pub fn derive(master: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(mix64(master) ^ stream) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Stream tags used by the experiment harness.
pub const STREAM_TRIAL: u64 = 0;
pub const STREAM_SPLIT: u64 = 1;
pub const STREAM_ANONYMIZE: u64 = 2;
pub const STREAM_REVEAL: u64 = 3;
pub const STREAM_DRAW: u64 = 4;
