//! Seeded random streams.
//!
//! Every sample draws from its own stream, derived from the master seed plus a
//! path of integers (family, split, purpose, sample index, attempt). Streams do
//! not depend on generation order, so parallel builds are reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RandomStream = ChaCha8Rng;

/// Stream purposes. The numeric values are part of the on-disk reproducibility
/// contract; do not renumber.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    TrainParams = 1,
    TrainIc = 2,
    TestParams = 3,
    TestIc = 4,
    Description = 5,
    Shuffle = 6,
    Init = 7,
    QuerySubsample = 8,
    Reference = 9,
    Split = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path of integers into a single 64-bit seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(master: u64, path: &[u64]) -> RandomStream {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

pub fn purpose_stream(
    master: u64,
    family: usize,
    purpose: StreamPurpose,
    index: u64,
    attempt: u64,
) -> RandomStream {
    stream(master, &[family as u64, purpose as u64, index, attempt])
}
