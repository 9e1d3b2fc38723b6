//! Deterministic pseudo-random streams.
//!
//! Everything random in the crate (base-set sampling, oracle jitter, coin
//! flips) draws from SplitMix64 so that corpora and transcripts replay
//! bit-for-bit from their seeds.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

pub struct SeedStream(SplitMix64);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    /// A stream determined by `seed` and a tuple of key fields; equal keys
    /// always yield equal streams.
    pub fn keyed(seed: u64, parts: &[u64]) -> Self {
        let mut state = SplitMix64::seed_from_u64(seed).next_u64();
        for &p in parts {
            state = SplitMix64::seed_from_u64(state ^ p.rotate_left(29)).next_u64();
        }
        Self::new(state)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_in(&mut self, lo: i64, hi: i64) -> i64 {
        let span = (hi - lo + 1) as u64;
        lo + (self.next_u64() % span) as i64
    }

    pub fn coin(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }
}
