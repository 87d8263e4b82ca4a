//! Counter-based random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha8 generator whose key
//! is derived from a 64-bit root seed plus a named sub-stream, and whose
//! stream id encodes the position of the draw (time index, particle index).
//! A particle's randomness at a given time therefore never depends on how
//! work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator handed to model simulators.
pub type PompRng = ChaCha8Rng;

/// Reserved index for draws that happen before the first observation.
pub const INIT_INDEX: u32 = u32::MAX;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Derives an independent 64-bit seed for the named sub-stream `tag/index`.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(tag)) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

fn key_from(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    key
}

/// A single sequential generator for `seed`.
pub fn rng_from_seed(seed: u64) -> PompRng {
    ChaCha8Rng::from_seed(key_from(seed))
}

/// Keyed family of generators: one independent stream per `(time, slot)`.
#[derive(Debug, Clone)]
pub struct StreamFamily {
    key: [u8; 32],
}

impl StreamFamily {
    pub fn new(seed: u64, tag: &str) -> Self {
        Self {
            key: key_from(derive_seed(seed, tag, 0)),
        }
    }

    /// Generator for time index `time` and slot (particle, draw) `slot`.
    pub fn at(&self, time: u32, slot: u32) -> PompRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(((time as u64) << 32) | slot as u64);
        rng
    }
}
