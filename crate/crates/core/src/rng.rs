//! Reproducible random streams.
//!
//! A [`Stream`] is the ChaCha8 keystream (the ChaCha block function reduced
//! to 8 rounds, 64-bit block counter, 64-bit stream id). The 256-bit key is
//! the seed as 8 little-endian bytes followed by 24 zero bytes; the stream id
//! selects an independent substream, which is how one seed is split into
//! arrival, mark and Monte Carlo streams. Each draw consumes one 64-bit word
//! (two consecutive 32-bit keystream words, low word first).
//!
//! Variates are produced by inversion so they can be reproduced without
//! any particular library:
//! - uniform on [0,1): `(w >> 11) * 2^-53`
//! - exponential with mean m: `-m * ln(1 - u)`

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Well-known substream ids.
pub mod streams {
    pub const ARRIVALS: u64 = 0;
    pub const MARKS: u64 = 1;
    pub const MONTE_CARLO: u64 = 2;
    pub const INSTANCES: u64 = 3;
}

#[derive(Clone, Debug)]
pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    #[inline]
    pub fn exponential(&mut self, mean: f64) -> f64 {
        -mean * (1.0 - self.uniform()).ln()
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

/// Derive a child seed, used when one seed drives many instances.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over (seed, index).
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
