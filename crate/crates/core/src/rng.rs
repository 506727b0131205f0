//! Seed derivation for named random streams.
//!
//! Every stochastic component receives its own ChaCha stream whose seed is a
//! pure function of the master seed, a stream name and an index (usually the
//! epoch). Two components never share a stream, so changing how much one of
//! them consumes leaves the others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derives a child seed for the stream `name` at position `index`.
pub fn derive_seed(master: u64, name: &str, index: u64) -> u64 {
    let a = splitmix64(master ^ fnv1a(name));
    splitmix64(a ^ splitmix64(index.wrapping_mul(GOLDEN)))
}

/// Opens the stream `name` at position `index`.
pub fn stream(master: u64, name: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, name, index))
}
