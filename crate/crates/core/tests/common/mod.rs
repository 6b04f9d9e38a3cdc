#![allow(dead_code)]

use adasamp_core::{Dataset, Example, IndexSampler, Result};
use rand::{Rng, RngCore};

/// Random small classification set; features in `[-1, 1]^dim`.
pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, dim: usize, classes: usize) -> Dataset {
    let examples = (0..n)
        .map(|i| {
            let x = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            // every class appears at least once when n >= classes
            let y = if i < classes { i } else { rng.random_range(0..classes) };
            Example::new(x, y)
        })
        .collect();
    Dataset::with_classes(examples, classes).unwrap()
}

pub fn uniform01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Weighted sampler over a plain vector. Sampling walks the same implicit
/// padded binary tree as the weight tree, but every subtree sum is
/// recomputed from the leaves, so no incremental labels are involved.
#[derive(Debug, Clone)]
pub struct NaiveSampler {
    pub weights: Vec<f64>,
}

impl NaiveSampler {
    pub fn new(weights: Vec<f64>) -> Self {
        NaiveSampler { weights }
    }

    fn range_sum(&self, lo: usize, hi: usize) -> f64 {
        let hi = hi.min(self.weights.len());
        if lo >= hi {
            0.0
        } else {
            self.weights[lo..hi].iter().sum()
        }
    }
}

impl IndexSampler for NaiveSampler {
    fn len(&self) -> usize {
        self.weights.len()
    }

    fn weight(&self, i: usize) -> Result<f64> {
        Ok(self.weights[i])
    }

    fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let cap = self.weights.len().next_power_of_two();
        let (mut lo, mut hi) = (0, cap);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let l = self.range_sum(lo, mid);
            let r = self.range_sum(mid, hi);
            if uniform01(rng) * (l + r) < l {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo)
    }

    fn prob(&self, i: usize) -> Result<f64> {
        Ok(self.weights[i] / self.total())
    }

    fn set_weight(&mut self, i: usize, weight: f64) -> Result<()> {
        self.weights[i] = weight;
        Ok(())
    }

    fn distribution(&self) -> Result<Vec<f64>> {
        let t = self.total();
        Ok(self.weights.iter().map(|w| w / t).collect())
    }
}

/// Uniform draw over `0..n` that branches on live-leaf counts of the
/// padded tree, one uniform per level.
pub fn uniform_traversal<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    let cap = n.next_power_of_two();
    let live = |lo: usize, hi: usize| hi.min(n).saturating_sub(lo) as f64;
    let (mut lo, mut hi) = (0, cap);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let (l, r) = (live(lo, mid), live(mid, hi));
        if uniform01(rng) * (l + r) < l {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}
