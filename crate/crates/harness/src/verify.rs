//! Statistical and cost checks of the weight tree against plain
//! normalization.

use adasamp_core::WeightTree;
use anyhow::{ensure, Result};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerCheck {
    pub n: usize,
    pub draws: u64,
    /// Largest `|tree prob - w_i / sum(w)|`.
    pub max_prob_error: f64,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub depth: u32,
    /// Node labels read per draw, averaged.
    pub touches_per_draw: f64,
    /// Node labels written per single-weight update, averaged.
    pub touches_per_update: f64,
}

/// Weights uniform in `[0.05, 1)`, so every cell's expected count is of
/// the same order.
pub fn random_weights(n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.05..1.0)).collect()
}

/// Pearson's statistic of `counts` against `probs * draws`.
pub fn chi_square(counts: &[u64], probs: &[f64], draws: u64) -> f64 {
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * draws as f64;
            (c as f64 - e) * (c as f64 - e) / e
        })
        .sum()
}

/// Upper-tail probability of the chi-square distribution.
pub fn chi_square_p_value(stat: f64, dof: usize) -> Result<f64> {
    let dist = ChiSquared::new(dof as f64)?;
    Ok(dist.sf(stat))
}

pub fn check_sampler(weights: &[f64], draws: u64, rng: &mut dyn RngCore) -> Result<SamplerCheck> {
    ensure!(weights.len() >= 2, "need at least two weights");
    ensure!(draws >= 1, "need at least one draw");
    let mut tree = WeightTree::new(weights)?;
    let total: f64 = weights.iter().sum();
    let naive: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut max_prob_error: f64 = 0.0;
    for (i, p) in naive.iter().enumerate() {
        max_prob_error = max_prob_error.max((tree.prob(i)? - p).abs());
    }

    tree.reset_node_touches();
    let mut counts = vec![0u64; weights.len()];
    for _ in 0..draws {
        counts[tree.sample(rng)?] += 1;
    }
    let touches_per_draw = tree.node_touches() as f64 / draws as f64;
    let stat = chi_square(&counts, &naive, draws);
    let dof = weights.len() - 1;

    // rewrite every leaf with its own value: touches only, no drift
    tree.reset_node_touches();
    for (i, &w) in weights.iter().enumerate() {
        tree.update(i, w)?;
    }
    let touches_per_update = tree.node_touches() as f64 / weights.len() as f64;

    Ok(SamplerCheck {
        n: weights.len(),
        draws,
        max_prob_error,
        chi_square: stat,
        dof,
        p_value: chi_square_p_value(stat, dof)?,
        depth: tree.depth(),
        touches_per_draw,
        touches_per_update,
    })
}

/// `vectors` random weight vectors for each size in `sizes`.
pub fn verify_sampler(
    seed: u64,
    sizes: &[usize],
    vectors: usize,
    draws: u64,
) -> Result<Vec<SamplerCheck>> {
    let mut rng = seeds::stream(seed, seeds::PROBE);
    let mut out = Vec::new();
    for k in 0..vectors {
        let n = sizes[k % sizes.len()];
        let w = random_weights(n, &mut rng);
        out.push(check_sampler(&w, draws, &mut rng)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_of_the_median_is_about_a_half() {
        // the median of chi-square(1) is 0.45494
        let p = chi_square_p_value(0.454_936_423_119_572_8, 1).unwrap();
        assert!((p - 0.5).abs() < 1e-9);
    }

    #[test]
    fn small_tree_passes() {
        let mut rng = seeds::stream(1, seeds::PROBE);
        let c = check_sampler(&[0.1, 0.2, 0.3, 0.4, 0.5], 20_000, &mut rng).unwrap();
        assert!(c.max_prob_error < 1e-15);
        assert!(c.p_value > 1e-3);
        assert_eq!(c.depth, 3);
        assert_eq!(c.touches_per_draw, 3.0);
        assert_eq!(c.touches_per_update, 4.0);
    }

    #[test]
    fn skewed_counts_fail() {
        let stat = chi_square(&[600, 400], &[0.5, 0.5], 1000);
        assert!((stat - 40.0).abs() < 1e-12);
        assert!(chi_square_p_value(stat, 1).unwrap() < 1e-3);
    }
}
