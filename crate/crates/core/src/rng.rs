//! Deterministic randomness shared by every module.
//!
//! A [`SeededRng`] is a ChaCha8 stream addressed by `(seed, stream)`. Each
//! consumer (replay sampling, initialization, exploration, ...) takes its own
//! stream so that adding draws in one place never shifts another.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Well-known stream ids used by the harness.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const REPLAY: u64 = 2;
    pub const EXPLORE: u64 = 3;
    pub const ENV: u64 = 4;
    pub const LOGGING: u64 = 5;
    pub const SIMULATION: u64 = 6;
    pub const CEM: u64 = 7;
    pub const EVAL: u64 = 8;
    pub const MIX: u64 = 9;
    pub const FITNESS: u64 = 10;
    pub const SESSIONS: u64 = 11;
    pub const STEPS: u64 = 12;
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform index in `[0, n)`. Drawn through `u64` so the sequence does
    /// not depend on the platform's pointer width.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        self.inner.random_range(0..n as u64) as usize
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Derives a fresh seed, e.g. for per-episode environment resets.
    pub fn next_seed(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
