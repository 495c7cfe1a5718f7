//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of stream coordinates into one 64-bit seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Random stream for the given coordinates, e.g. `(experiment seed, [step, question, group])`.
pub fn stream(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// Stream labels so unrelated consumers of the same base seed never share a stream.
pub mod label {
    pub const WORLD: u64 = 1;
    pub const QUESTIONS: u64 = 2;
    pub const ROLLOUT: u64 = 3;
    pub const SCENARIO: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const BATCH: u64 = 6;
}
