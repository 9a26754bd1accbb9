//! Counter-based derivation of per-chain RNG seeds.
//!
//! A chain seed is `mix(mix(...mix(splitmix(master) ^ splitmix(tag0))...) ^ splitmix(tagN))`
//! where `splitmix` is the SplitMix64 finalizer. Any single chain can be
//! regenerated from the master seed and its tags alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream families. The discriminant is the first tag of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Stage1 = 1,
    Stage2 = 2,
    Divergence = 3,
    Anneal = 4,
    FinalStage1 = 5,
    FinalStage2 = 6,
    Replicate = 7,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit seed from a master seed and a tag path.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(master), |h, &t| splitmix(h ^ splitmix(t.wrapping_add(0xA5A5_A5A5))))
}

/// Seed for one chain of a named stream at a grid/proposal index.
pub fn chain_seed(master: u64, stream: Stream, index: usize) -> u64 {
    derive_seed(master, &[stream as u64, index as u64])
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
