//! Seed derivation.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` seeded by mixing a
//! job seed with a tuple of stream identifiers (epoch, sample, stage, ...), so
//! results never depend on call order or on how work is split across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `seed` with the stream identifiers into a new seed.
pub fn derive(seed: u64, stream: &[u64]) -> u64 {
    stream
        .iter()
        .fold(splitmix64(seed), |acc, &s| splitmix64(acc ^ splitmix64(s)))
}

/// Seed for a named pipeline stage.
pub fn derive_str(seed: u64, tag: &str, stream: &[u64]) -> u64 {
    let tag_hash = tag
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    derive(seed ^ tag_hash, stream)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, tag: &str, stream: &[u64]) -> Rng {
    rng(derive_str(seed, tag, stream))
}

/// Uniform value in `[0, 1)` from a pure hash of the inputs.
pub fn hash_unit(seed: u64, stream: &[u64]) -> f32 {
    (derive(seed, stream) >> 40) as f32 / (1u64 << 24) as f32
}
