//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a 64-bit seed obtained by folding a root seed with a path of
//! integer tags, so independent consumers never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn hash64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `root`, order-sensitive.
pub fn derive(root: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(hash64(root), |acc, &p| hash64(acc ^ hash64(p).rotate_left(17)))
}

/// Hash of a string, stable across platforms and runs.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01B3)
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(root: u64, parts: &[u64]) -> ChaCha8Rng {
    rng(derive(root, parts))
}

// Stream tags.
pub(crate) const TAG_SYMBOLS: u64 = 0x5359_4d42;
pub(crate) const TAG_BEAM_TAPS: u64 = 0x5441_5053;
pub(crate) const TAG_PHASE_NOISE: u64 = 0x504e_4f49;
pub(crate) const TAG_AWGN: u64 = 0x4157_474e;
pub(crate) const TAG_DATASET: u64 = 0x4453_4554;
pub(crate) const TAG_SPLIT: u64 = 0x5350_4c54;
pub(crate) const TAG_EPISODE: u64 = 0x4550_4953;
pub(crate) const TAG_AUGMENT: u64 = 0x4155_474d;
pub(crate) const TAG_VALIDATION: u64 = 0x5641_4c49;
pub(crate) const TAG_INIT: u64 = 0x494e_4954;
pub(crate) const TAG_PROTOTYPES: u64 = 0x5052_4f54;
pub(crate) const TAG_PCA: u64 = 0x5043_4121;
