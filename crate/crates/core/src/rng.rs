//! Counter-based random streams.
//!
//! Every random draw in the crate comes from ChaCha20 keyed by a 64-bit seed
//! (little-endian in the first 8 key bytes, remaining 24 bytes zero) with the
//! 64-bit ChaCha stream id selecting an independent substream. Stream ids are
//! built from a purpose tag in the high 16 bits and a per-item counter in the
//! low 48 bits, so `(seed, purpose, index)` fully determines the sequence.
//!
//! Conversions are fixed so other implementations can reproduce them:
//! uniform `f64` is `(next_u64 >> 11) * 2^-53`, Gaussian draws use the
//! Box–Muller cosine branch on two uniforms with `u1` mapped to `(0, 1]`.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Purpose tags keep substreams for different consumers disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Purpose {
    Layout = 1,
    Render = 2,
    Augment = 3,
    Init = 4,
    Shuffle = 5,
    Check = 6,
    Misc = 7,
}

/// Deterministic random stream.
#[derive(Debug, Clone)]
pub struct Stream {
    inner: ChaCha20Rng,
}

impl Stream {
    pub fn new(seed: u64, purpose: Purpose, index: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(((purpose as u64) << 48) | (index & 0xFFFF_FFFF_FFFF));
        Self { inner }
    }

    /// Derive a child stream; used to split per-epoch or per-operation draws.
    pub fn fork(&mut self, purpose: Purpose) -> Stream {
        let seed = self.next_u64();
        Stream::new(seed, purpose, 0)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` (n > 0), by rejection to avoid modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal draw.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
