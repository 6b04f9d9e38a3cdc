//! Empirical uniform-stability probes for uniform-sampling SGD on the
//! strongly convex regularized objective.
//!
//! The data probe replaces one training example and measures
//! `max_z |E_r[l(A(S, r), z) - l(A(S', r), z)]|`, averaging over a shared set
//! of index sequences `r`. The hyperparameter probe keeps `S` and changes one
//! position of one index sequence, measuring `max_z |l(A(S, r), z) - l(A(S, r'), z)|`.
//! Both maxima run over the training set plus held-out points (and, for data
//! probes, the swapped-in example).

use adasamp_core::model::bounded_loss;
use adasamp_core::rng::uniform_index;
use adasamp_core::{
    AdaptiveTrainer, Dataset, Example, Hypothesis, ObjectiveConfig, SamplerConfig, StepSchedule,
    UpdateRuleState,
};
use anyhow::{ensure, Result};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::experiment::load_splits;
use crate::seeds;

/// A fixed training set, objective and strongly convex step schedule.
#[derive(Debug, Clone)]
pub struct ProbeSetup {
    pub data: Dataset,
    pub objective: ObjectiveConfig,
    pub schedule: StepSchedule,
    pub iterations: u64,
    pub max_loss: f64,
}

impl ProbeSetup {
    /// SGD with batch one along a prescribed index sequence.
    pub fn run(&self, data: &Dataset, indices: &[usize]) -> Result<Hypothesis> {
        ensure!(
            indices.len() as u64 == self.iterations,
            "index sequence has {} entries, expected {}",
            indices.len(),
            self.iterations
        );
        let cfg = SamplerConfig {
            amplitude: 0.0,
            decay: 0.5,
            utility: adasamp_core::UtilityKind::L1,
            batch_size: 1,
            iterations: self.iterations,
            track_full_conditional_kl: false,
        };
        let mut trainer = AdaptiveTrainer::new(
            data,
            cfg,
            self.schedule,
            UpdateRuleState::sgd(),
            self.objective,
            Hypothesis::for_dataset(data),
        )?;
        for &i in indices {
            trainer.step_with_indices(&[i])?;
        }
        Ok(trainer.finish().0)
    }

    pub fn random_indices(&self, rng: &mut dyn RngCore) -> Vec<usize> {
        (0..self.iterations)
            .map(|_| uniform_index(rng, self.data.len()))
            .collect()
    }

    fn losses(&self, h: &Hypothesis, eval: &[&Example]) -> Result<Vec<f64>> {
        eval.iter()
            .map(|z| Ok(bounded_loss(h, z, self.max_loss)?))
            .collect()
    }

    /// `max_z |mean_r l(A(S, r), z) - mean_r l(A(S', r), z)|`.
    pub fn data_probe(
        &self,
        replaced: &Dataset,
        sequences: &[Vec<usize>],
        eval: &[&Example],
    ) -> Result<f64> {
        ensure!(!sequences.is_empty(), "need at least one index sequence");
        let mut diff = vec![0.0; eval.len()];
        for r in sequences {
            let a = self.losses(&self.run(&self.data, r)?, eval)?;
            let b = self.losses(&self.run(replaced, r)?, eval)?;
            for (d, (x, y)) in diff.iter_mut().zip(a.iter().zip(&b)) {
                *d += x - y;
            }
        }
        let k = sequences.len() as f64;
        Ok(diff.iter().map(|d| (d / k).abs()).fold(0.0, f64::max))
    }

    /// `max_z |l(A(S, r), z) - l(A(S, r'), z)|`.
    pub fn hyper_probe(&self, r: &[usize], r_prime: &[usize], eval: &[&Example]) -> Result<f64> {
        let a = self.losses(&self.run(&self.data, r)?, eval)?;
        let b = self.losses(&self.run(&self.data, r_prime)?, eval)?;
        Ok(a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub n: u64,
    pub iters: u64,
    pub mu: f64,
    pub lipschitz: f64,
    pub perturbations: usize,
    /// Index sequences averaged over in each data probe.
    pub shared_sequences: usize,
    pub beta_empirical: f64,
    pub beta_median: f64,
    /// `2 L^2 / (mu n)`.
    pub beta_bound: f64,
    pub gamma_empirical: f64,
    pub gamma_median: f64,
    /// `2 L^2 / (mu T)`.
    pub gamma_bound: f64,
    pub data_probes: Vec<f64>,
    pub hyper_probes: Vec<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    }
}

/// Run `perturbations` data probes and as many hyperparameter probes.
///
/// Always uses uniform sampling with batch one and the schedule
/// `eta_t = 1/(mu t + beta)`; `cfg.alpha`, `cfg.batch` and `cfg.schedule`
/// are ignored. Needs `mu > 0`.
pub fn probe_stability(
    cfg: &ExperimentConfig,
    perturbations: usize,
    shared_sequences: usize,
) -> Result<ProbeReport> {
    ensure!(cfg.mu > 0.0, "stability probes need mu > 0");
    ensure!(perturbations >= 1, "need at least one perturbation");
    ensure!(shared_sequences >= 1, "need at least one shared index sequence");
    ensure!(cfg.iters >= 1, "iters must be >= 1");
    let splits = load_splits(cfg)?;
    let held_out = splits
        .test
        .ok_or_else(|| anyhow::anyhow!("stability probes need held-out points for replacements"))?;
    let data = splits.train;
    let objective = cfg.objective(&data)?;
    let reg = cfg.regularity(&data)?;
    let setup = ProbeSetup {
        schedule: StepSchedule::StronglyConvex {
            mu: cfg.mu,
            beta: reg.smooth_beta,
        },
        objective,
        iterations: cfg.iters,
        max_loss: cfg.max_loss,
        data,
    };
    let n = setup.data.len();

    // All random choices are drawn up front so the parallel part is pure.
    let mut rng = seeds::stream(cfg.seed, seeds::PROBE);
    let sequences: Vec<Vec<usize>> = (0..shared_sequences)
        .map(|_| setup.random_indices(&mut rng))
        .collect();
    let swaps: Vec<(usize, usize)> = (0..perturbations)
        .map(|_| (uniform_index(&mut rng, n), uniform_index(&mut rng, held_out.len())))
        .collect();
    let hyper: Vec<(Vec<usize>, Vec<usize>)> = (0..perturbations)
        .map(|_| {
            let r = setup.random_indices(&mut rng);
            let mut r2 = r.clone();
            let pos = uniform_index(&mut rng, r.len());
            // a different index, uniformly among the other n - 1
            let shift = 1 + uniform_index(&mut rng, n - 1);
            r2[pos] = (r[pos] + shift) % n;
            (r, r2)
        })
        .collect();

    let base_eval: Vec<&Example> = setup
        .data
        .examples()
        .iter()
        .chain(held_out.examples())
        .collect();

    let data_probes = swaps
        .par_iter()
        .map(|&(i, j)| {
            let z_new = held_out.examples()[j].clone();
            let replaced = setup.data.with_replaced(i, z_new.clone())?;
            let mut eval = base_eval.clone();
            eval.push(&z_new);
            setup.data_probe(&replaced, &sequences, &eval)
        })
        .collect::<Result<Vec<f64>>>()?;
    let hyper_probes = hyper
        .par_iter()
        .map(|(r, r2)| setup.hyper_probe(r, r2, &base_eval))
        .collect::<Result<Vec<f64>>>()?;

    let l = reg.lipschitz;
    Ok(ProbeReport {
        n: n as u64,
        iters: cfg.iters,
        mu: cfg.mu,
        lipschitz: l,
        perturbations,
        shared_sequences,
        beta_empirical: data_probes.iter().copied().fold(0.0, f64::max),
        beta_median: median(&data_probes),
        beta_bound: 2.0 * l * l / (cfg.mu * n as f64),
        gamma_empirical: hyper_probes.iter().copied().fold(0.0, f64::max),
        gamma_median: median(&hyper_probes),
        gamma_bound: 2.0 * l * l / (cfg.mu * cfg.iters as f64),
        data_probes,
        hyper_probes,
    })
}
