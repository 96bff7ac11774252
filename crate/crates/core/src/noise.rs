//! Noise distribution for negative sampling and the crate's seeded RNG.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const DEFAULT_POWER: f64 = 0.75;

/// Deterministic pseudo-random stream: ChaCha8 seeded from a 64-bit seed.
/// The same seed yields the same stream on every platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// `P_n(w) ∝ count(w)^power`, sampled in O(1) with Vose's alias method.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDistribution {
    probs: Vec<f64>,
    accept: Vec<f64>,
    alias: Vec<usize>,
}

impl NoiseDistribution {
    pub fn new(counts: &[u64], power: f64) -> Result<Self> {
        let v = counts.len();
        if v < 2 {
            return Err(Error::InvalidCounts(format!("need at least 2 words, got {v}")));
        }
        if let Some(w) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidCounts(format!("word {w} has count 0")));
        }
        if !power.is_finite() {
            return Err(Error::InvalidCounts(format!("power must be finite, got {power}")));
        }
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(power)).collect();
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();

        let n = v as f64;
        let mut scaled: Vec<f64> = probs.iter().map(|p| p * n).collect();
        let mut accept = vec![1.0; v];
        let mut alias: Vec<usize> = (0..v).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..v).partition(|&i| scaled[i] < 1.0);
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            accept[s] = scaled[s];
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in small.into_iter().chain(large) {
            accept[i] = 1.0;
        }
        Ok(Self { probs, accept, alias })
    }

    pub fn unigram(counts: &[u64]) -> Result<Self> {
        Self::new(counts, DEFAULT_POWER)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability mass the alias table assigns to each word.
    pub fn table_mass(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut mass: Vec<f64> = self.accept.iter().map(|a| a / n).collect();
        for (i, &a) in self.accept.iter().enumerate() {
            mass[self.alias[i]] += (1.0 - a) / n;
        }
        mass
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        let i = rng.below(self.len());
        if rng.uniform() < self.accept[i] {
            i
        } else {
            self.alias[i]
        }
    }

    /// Draws `k` words i.i.d., redrawing any draw equal to `exclude`.
    /// Duplicates are kept.
    pub fn sample_negatives(&self, k: usize, exclude: usize, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let w = self.sample(rng);
            if w != exclude {
                out.push(w);
            }
        }
        out
    }
}
