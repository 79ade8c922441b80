//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed. ChaCha has a
//! fixed, platform-independent output sequence, and its 64-bit stream id gives
//! independent substreams from one seed without any ad-hoc hashing.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Well-known substream labels, so that e.g. dataset sampling and weight
/// initialization never share random numbers even when given the same seed.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const DATA: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const SEARCH: u64 = 6;
    pub const GRADCHECK: u64 = 7;
}

#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// An independent stream for `(seed, label)`.
    pub fn substream(seed: u64, label: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(label);
        Self {
            inner,
            spare_normal: None,
        }
    }

    /// Derives a child seed, e.g. one per trial of a search.
    pub fn derive_seed(seed: u64, label: u64, index: u64) -> u64 {
        let mut rng = Self::substream(seed, label);
        rng.inner.set_word_pos(u128::from(index) * 2);
        rng.inner.next_u64()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`; `lo == hi` yields `lo`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        let v = lo + (hi - lo) * self.uniform();
        if v >= hi && hi > lo {
            lo
        } else {
            v
        }
    }

    pub fn uniform_vec(&mut self, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Argument(format!(
                "uniform range requires finite lo <= hi, got [{lo}, {hi})"
            )));
        }
        Ok((0..n).map(|_| self.range(lo, hi)).collect())
    }

    /// Standard normal via Box–Muller; the second variate of each pair is kept
    /// for the next call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u keeps the radius argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = Rng::new(42).uniform_vec(0.0, 1.0, 100).unwrap();
        let b = Rng::new(42).uniform_vec(0.0, 1.0, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_range_is_constant() {
        assert_eq!(Rng::new(3).uniform_vec(0.0, 0.0, 5).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn reversed_range_rejected() {
        assert!(matches!(
            Rng::new(3).uniform_vec(1.0, 0.0, 5),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn sample_mean_near_half() {
        let v = Rng::new(42).uniform_vec(0.0, 1.0, 100_000).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
        assert!(v.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn substreams_differ_by_label() {
        let a = Rng::substream(7, stream::INIT).uniform_vec(0.0, 1.0, 8).unwrap();
        let b = Rng::substream(7, stream::DATA).uniform_vec(0.0, 1.0, 8).unwrap();
        assert_ne!(a, b);
        let a2 = Rng::substream(7, stream::INIT).uniform_vec(0.0, 1.0, 8).unwrap();
        assert_eq!(a, a2);
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: Vec<u64> = (0..50).map(|i| Rng::derive_seed(1, stream::SEARCH, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
    }

    #[test]
    fn normal_moments() {
        let mut rng = Rng::new(9);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }
}
