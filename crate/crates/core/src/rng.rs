//! Keyed random streams.
//!
//! Every stochastic decision is drawn from a stream determined only by
//! `(seed, purpose, a, b)`, never by processing order, so parallel and serial
//! runs agree bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags separating otherwise-identical keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    CandidatePool = 1,
    RandomInit = 2,
    RandomBadness = 3,
    Locations = 4,
    Edges = 5,
    Evidence = 6,
    Corruption = 7,
    TheoryInstance = 8,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds the stream for `(seed, purpose, a, b)`.
pub fn stream(seed: u64, purpose: Stream, a: u64, b: u64) -> StreamRng {
    let mut key = [0u8; 32];
    let mut h = splitmix(seed);
    for (chunk, word) in key.chunks_exact_mut(8).zip([purpose as u64, a, b, 0x5452_4944_45]) {
        h = splitmix(h ^ word);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
