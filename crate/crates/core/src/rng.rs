//! Reproducible random streams.
//!
//! Every replica owns a ChaCha8 generator keyed by `(seed, stream)`. ChaCha is
//! counter based, so streams never overlap and the draws of replica `r` do not
//! depend on how many other replicas exist or on which thread runs them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used by every simulation in the crate.
pub type StreamRng = ChaCha8Rng;

/// Opens stream `stream` of the generator family identified by `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent family seed from `seed` and a domain tag.
///
/// Used to give the GWI replicas of each scale `n` and the SDE ensemble of an
/// experiment their own families without the caller juggling seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
