//! Re-weightable categorical sampling in logarithmic time.
//!
//! Weights live in the leaves of a full binary tree of depth
//! `ceil(log2 n)`; every internal node is labeled with the sum of its
//! children. Drawing an index is a root-to-leaf walk that branches left with
//! probability `left / (left + right)`, and changing one weight adds the
//! difference to each label on the leaf's path. Leaves past `n` are padding
//! and hold zero forever.
//!
//! Labels are stored in a flat array: the root is at position 1, the
//! children of `k` are `2k` and `2k + 1`, and leaf `i` sits at
//! `capacity + i`.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::rng::uniform01;

/// Updates between automatic bottom-up rebuilds of the internal labels.
pub const REBUILD_INTERVAL: u64 = 1 << 20;

/// A mutable categorical distribution over `0..len()`.
///
/// The adaptive trainer is generic over this so that tests can swap the
/// tree for a naive `O(n)` implementation.
pub trait IndexSampler {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized weight of `i`.
    fn weight(&self, i: usize) -> Result<f64>;

    /// Sum of all weights.
    fn total(&self) -> f64;

    /// Draw one index with probability proportional to its weight.
    fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<usize>;

    /// Normalized probability of `i`.
    fn prob(&self, i: usize) -> Result<f64>;

    /// Replace the weight of `i`.
    fn set_weight(&mut self, i: usize, weight: f64) -> Result<()>;

    /// The full normalized distribution, `O(n)`.
    fn distribution(&self) -> Result<Vec<f64>>;
}

/// Sum-labeled full binary tree over `n` nonnegative weights.
#[derive(Debug, Clone)]
pub struct WeightTree {
    len: usize,
    capacity: usize,
    depth: u32,
    nodes: Vec<f64>,
    updates_since_rebuild: u64,
    touches: Cell<u64>,
}

fn check_weight(index: usize, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidWeight { index, value })
    }
}

impl WeightTree {
    /// Build the tree from initial weights. At least one weight must be
    /// strictly positive.
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        for (i, &w) in weights.iter().enumerate() {
            check_weight(i, w)?;
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::ZeroTotalWeight);
        }
        let capacity = weights.len().next_power_of_two();
        let mut tree = WeightTree {
            len: weights.len(),
            capacity,
            depth: capacity.trailing_zeros(),
            nodes: vec![0.0; 2 * capacity],
            updates_since_rebuild: 0,
            touches: Cell::new(0),
        };
        tree.nodes[capacity..capacity + weights.len()].copy_from_slice(weights);
        tree.rebuild();
        Ok(tree)
    }

    /// `n` leaves, all with weight one.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(&vec![1.0; n])
    }

    /// Padded leaf count, `2^depth`.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of internal levels walked by a draw.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Root label: the total weight.
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Running count of node labels read by draws or written by updates.
    pub fn node_touches(&self) -> u64 {
        self.touches.get()
    }

    pub fn reset_node_touches(&self) {
        self.touches.set(0);
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.len,
            })
        }
    }

    fn positive_total(&self) -> Result<f64> {
        let total = self.total();
        if total > 0.0 {
            Ok(total)
        } else {
            Err(Error::ZeroTotalWeight)
        }
    }

    /// Relabel every internal node from its children, bottom-up.
    pub fn rebuild(&mut self) {
        for k in (1..self.capacity).rev() {
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
        self.updates_since_rebuild = 0;
    }

    /// Largest absolute gap between an internal label and the sum of its
    /// children.
    pub fn sum_invariant_error(&self) -> f64 {
        (1..self.capacity)
            .map(|k| libm::fabs(self.nodes[k] - (self.nodes[2 * k] + self.nodes[2 * k + 1])))
            .fold(0.0, f64::max)
    }

    /// Leaf labels including padding.
    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.capacity..]
    }

    /// Walk from the root using one uniform draw per level.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        self.positive_total()?;
        let mut k = 1;
        let mut touched = 0u64;
        while k < self.capacity {
            touched += 1;
            // Drifted labels can go a hair below zero; never let that flip a branch.
            let left = self.nodes[2 * k].max(0.0);
            let right = self.nodes[2 * k + 1].max(0.0);
            let u = uniform01(rng);
            k = if u * (left + right) < left { 2 * k } else { 2 * k + 1 };
        }
        self.touches.set(self.touches.get() + touched);
        Ok(k - self.capacity)
    }

    /// Set leaf `i` to `weight`, adding the difference to every label on
    /// its path to the root.
    pub fn update(&mut self, i: usize, weight: f64) -> Result<()> {
        self.check_index(i)?;
        check_weight(i, weight)?;
        let mut k = self.capacity + i;
        let delta = weight - self.nodes[k];
        self.nodes[k] = weight;
        let mut touched = 1u64;
        while k > 1 {
            k /= 2;
            touched += 1;
            let (left, right) = (self.nodes[2 * k], self.nodes[2 * k + 1]);
            // An emptied subtree is relabeled to an exact zero so it can never be entered.
            self.nodes[k] = if left == 0.0 && right == 0.0 {
                0.0
            } else {
                self.nodes[k] + delta
            };
        }
        self.touches.set(self.touches.get() + touched);
        self.updates_since_rebuild += 1;
        if self.updates_since_rebuild >= REBUILD_INTERVAL {
            self.rebuild();
        }
        Ok(())
    }

    /// `w_i / W`, read from the leaf and the root.
    pub fn prob(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        let total = self.positive_total()?;
        Ok(self.nodes[self.capacity + i] / total)
    }

    /// Normalized weights of the live leaves.
    pub fn to_distribution(&self) -> Result<Vec<f64>> {
        let total = self.positive_total()?;
        Ok(self.nodes[self.capacity..self.capacity + self.len]
            .iter()
            .map(|w| w / total)
            .collect())
    }
}

impl IndexSampler for WeightTree {
    fn len(&self) -> usize {
        self.len
    }

    fn total(&self) -> f64 {
        WeightTree::total(self)
    }

    fn weight(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.nodes[self.capacity + i])
    }

    fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        WeightTree::sample(self, rng)
    }

    fn prob(&self, i: usize) -> Result<f64> {
        WeightTree::prob(self, i)
    }

    fn set_weight(&mut self, i: usize, weight: f64) -> Result<()> {
        self.update(i, weight)
    }

    fn distribution(&self) -> Result<Vec<f64>> {
        self.to_distribution()
    }
}
