//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream keyed by
//! `(seed, stream)`. ChaCha is counter based: the k-th `u64` of a stream sits
//! at word position `2k`, so draw `k` of a sampler is a pure function of
//! `(seed, stream, k)` no matter how the work is scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream identifiers for the different consumers of a seed.
pub mod streams {
    pub const INSTANCE: u64 = 1;
    pub const SAMPLING: u64 = 2;
    pub const ENSEMBLE: u64 = 3;
    pub const LANCZOS: u64 = 4;
}

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Position a stream at its k-th `u64`.
pub fn stream_rng_at(seed: u64, stream: u64, index: u64) -> StreamRng {
    let mut rng = stream_rng(seed, stream);
    rng.set_word_pos(2 * index as u128);
    rng
}

/// Derive an independent child seed; used for per-trial seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Map one `u64` onto `[0, n)` by widening multiply.
///
/// The bias is below `n / 2^64`, far under anything measurable here.
pub fn reduce(word: u64, n: u64) -> u64 {
    ((word as u128 * n as u128) >> 64) as u64
}

/// Uniform double in `[0, 1)` from one `u64`.
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn next_index(rng: &mut StreamRng, n: u64) -> u64 {
    reduce(rng.next_u64(), n)
}

pub fn next_unit(rng: &mut StreamRng) -> f64 {
    unit_f64(rng.next_u64())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_access_matches_sequential() {
        let mut seq = stream_rng(7, streams::SAMPLING);
        let words: Vec<u64> = (0..50).map(|_| seq.next_u64()).collect();
        for k in [0u64, 1, 17, 49] {
            let mut at = stream_rng_at(7, streams::SAMPLING, k);
            assert_eq!(at.next_u64(), words[k as usize]);
        }
    }

    #[test]
    fn streams_differ() {
        let a = stream_rng(1, 1).next_u64();
        let b = stream_rng(1, 2).next_u64();
        assert_ne!(a, b);
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }

    #[test]
    fn reduce_stays_in_range() {
        assert_eq!(reduce(u64::MAX, 10), 9);
        assert_eq!(reduce(0, 10), 0);
        assert!(unit_f64(u64::MAX) < 1.0);
    }
}
