//! Seed derivation. Every random stream in a run is derived from the run seed
//! plus a small tuple of stream coordinates, so the order in which workers
//! touch users never changes what they sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers keep independent purposes from colliding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Negatives = 3,
    Dropout = 4,
    Candidates = 5,
    GradCheck = 6,
    Synthetic = 7,
    Bench = 8,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream, coords: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for &c in coords {
        h = splitmix64(h ^ c);
    }
    h
}

pub fn stream_rng(seed: u64, stream: Stream, coords: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream, coords))
}
