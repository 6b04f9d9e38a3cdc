//! Adaptive sampling SGD.
//!
//! Every training example `i` carries a sampling weight `w_i`, initially 1.
//! Each iteration draws a mini-batch i.i.d. from `Q_t(i) = w_i / sum(w)`,
//! takes one update-rule step with the averaged objective gradient, and
//! then, for every *distinct* drawn index, applies the multiplicative
//! update
//!
//! ```text
//! w_i <- w_i^lambda * exp(alpha * U(z_i, h_t))
//! ```
//!
//! where `U` is a utility in `[0, 1]` evaluated at the new hypothesis.
//! Log-weights therefore obey `ln w_i = alpha * A_i`, with `A_i` the
//! `lambda`-discounted sum of the utilities recorded for `i`; both are kept
//! so the trace can be audited.
//!
//! With `alpha = 0` the weights never move and the trainer is plain SGD
//! with uniform sampling, consuming the random stream identically.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    accumulate_objective_grad, objective_value, predict_class, predict_proba, Dataset, Example,
    Hypothesis, ObjectiveConfig,
};
use crate::optim::{StepSchedule, UpdateRuleState};
use crate::weighted_sampler::{IndexSampler, WeightTree};

/// Largest admissible `alpha / (1 - lambda)`, the cap on any log-weight.
pub const MAX_LOG_WEIGHT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    /// 1 when the predicted class is wrong.
    ZeroOne,
    /// `1 - p(y | x)`.
    L1,
}

/// Utility of example `z` under `h`, always in `[0, 1]`.
pub fn utility(kind: UtilityKind, z: &Example, h: &Hypothesis) -> Result<f64> {
    match kind {
        UtilityKind::ZeroOne => {
            Ok(if predict_class(h, &z.features)? == z.label { 0.0 } else { 1.0 })
        }
        UtilityKind::L1 => {
            let p = predict_proba(h, &z.features)?;
            let py = *p.get(z.label).ok_or(Error::IndexOutOfRange {
                index: z.label,
                len: p.len(),
            })?;
            Ok((1.0 - py).clamp(0.0, 1.0))
        }
    }
}

/// `w^lambda * exp(alpha u)`, computed in the log domain.
pub fn weight_update(w: f64, u: f64, alpha: f64, decay: f64) -> Result<f64> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::param("w", "sampling weight must be finite and > 0"));
    }
    Ok(libm::exp(decay * libm::log(w) + alpha * u))
}

/// Knobs of the adaptive sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// `alpha >= 0`; zero gives uniform sampling.
    pub amplitude: f64,
    /// `lambda` in `(0, 1)`.
    pub decay: f64,
    pub utility: UtilityKind,
    pub batch_size: usize,
    pub iterations: u64,
    /// Record `KL(Q_t || uniform)` every iteration. Costs `O(n)` per step.
    pub track_full_conditional_kl: bool,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::param("amplitude", "must be finite and >= 0"));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::param("decay", "must lie in (0, 1)"));
        }
        if self.amplitude / (1.0 - self.decay) > MAX_LOG_WEIGHT {
            return Err(Error::param(
                "amplitude",
                "alpha / (1 - lambda) must not exceed 700 or weights overflow",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be >= 1"));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be >= 1"));
        }
        Ok(())
    }
}

/// What happened in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub t: u64,
    /// Drawn indices, in draw order.
    pub indices: Vec<usize>,
    /// `Q_t(i)` of each draw, read before drawing.
    pub probs: Vec<f64>,
    /// `sum over draws of ln(n Q_t(i))`.
    pub log_ratio: f64,
    /// `sum over draws of (A_i - mean_j A_j)` at the start of the iteration.
    pub accum_excess: f64,
    /// Distinct drawn indices, in first-draw order; each was re-weighted once.
    pub updated: Vec<usize>,
    /// `U(z_i, h_t)` for each entry of `updated`.
    pub utilities: Vec<f64>,
    pub step_size: f64,
    /// Mean training objective over the batch at `h_{t-1}`.
    pub batch_objective: f64,
    /// `KL(Q_t || uniform)` before drawing, when tracked.
    pub conditional_kl: Option<f64>,
}

/// Full record of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub n: usize,
    pub config: SamplerConfig,
    pub records: Vec<IterationRecord>,
    /// Number of weight updates each index has received.
    pub occurrences: Vec<u64>,
    /// Discounted utility sums `A_i`.
    pub accumulators: Vec<f64>,
    /// `ln w_i`.
    pub log_weights: Vec<f64>,
}

impl TrainTrace {
    /// All drawn indices, concatenated over iterations.
    pub fn index_stream(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().flat_map(|r| r.indices.iter().copied())
    }

    /// `sum_t sum_draws ln(n Q_t(i_t))`; its expectation over runs is
    /// exactly `KL(Q || P)` against the uniform prior.
    pub fn log_ratio_sum(&self) -> f64 {
        self.records.iter().map(|r| r.log_ratio).sum()
    }

    /// Utilities recorded for index `i`, oldest first.
    pub fn utility_history(&self, i: usize) -> Vec<f64> {
        self.records
            .iter()
            .flat_map(|r| r.updated.iter().zip(&r.utilities))
            .filter(|(&j, _)| j == i)
            .map(|(_, &u)| u)
            .collect()
    }

    /// `sum_j U_j lambda^(m - j)` recomputed from the recorded utilities.
    pub fn recompute_accumulator(&self, i: usize) -> f64 {
        self.utility_history(i)
            .iter()
            .fold(0.0, |acc, u| self.config.decay * acc + u)
    }
}

/// Stateful trainer; drive it with [`AdaptiveTrainer::step`] or replay a
/// fixed index sequence with [`AdaptiveTrainer::step_with_indices`].
#[derive(Debug, Clone)]
pub struct AdaptiveTrainer<'a, S: IndexSampler = WeightTree> {
    data: &'a Dataset,
    config: SamplerConfig,
    schedule: StepSchedule,
    rule: UpdateRuleState,
    objective: ObjectiveConfig,
    h: Hypothesis,
    sampler: S,
    log_weights: Vec<f64>,
    accumulators: Vec<f64>,
    accum_total: f64,
    occurrences: Vec<u64>,
    last_seen: Vec<u64>,
    t: u64,
    records: Vec<IterationRecord>,
    grad: Vec<f64>,
}

impl<'a> AdaptiveTrainer<'a, WeightTree> {
    pub fn new(
        data: &'a Dataset,
        config: SamplerConfig,
        schedule: StepSchedule,
        rule: UpdateRuleState,
        objective: ObjectiveConfig,
        h0: Hypothesis,
    ) -> Result<Self> {
        let tree = WeightTree::uniform(data.len())?;
        Self::with_sampler(data, config, schedule, rule, objective, h0, tree)
    }
}

impl<'a, S: IndexSampler> AdaptiveTrainer<'a, S> {
    /// Use a caller-supplied sampler. It must cover the dataset with all
    /// weights equal to one.
    pub fn with_sampler(
        data: &'a Dataset,
        config: SamplerConfig,
        schedule: StepSchedule,
        rule: UpdateRuleState,
        objective: ObjectiveConfig,
        h0: Hypothesis,
        sampler: S,
    ) -> Result<Self> {
        config.validate()?;
        schedule.validate()?;
        objective.validate()?;
        let n = data.len();
        if sampler.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: sampler.len(),
            });
        }
        for i in 0..n {
            if sampler.weight(i)? != 1.0 {
                return Err(Error::param("sampler", "initial weights must all be 1"));
            }
        }
        if h0.num_classes() != data.num_classes() || h0.feature_dim() != data.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: data.num_classes() * data.feature_dim(),
                actual: h0.params().len(),
            });
        }
        let grad = vec![0.0; h0.params().len()];
        Ok(AdaptiveTrainer {
            data,
            config,
            schedule,
            rule,
            objective,
            h: h0,
            sampler,
            log_weights: vec![0.0; n],
            accumulators: vec![0.0; n],
            accum_total: 0.0,
            occurrences: vec![0; n],
            last_seen: vec![0; n],
            t: 0,
            records: Vec::with_capacity(config.iterations.min(1 << 16) as usize),
            grad,
        })
    }

    pub fn hypothesis(&self) -> &Hypothesis {
        &self.h
    }

    pub fn sampler(&self) -> &S {
        &self.sampler
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Iterations completed so far.
    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.iterations
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.accumulators
    }

    /// Draw a mini-batch from the current weights and take one step.
    pub fn step<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> Result<&IterationRecord> {
        self.check_not_done()?;
        let cond_kl = self.current_conditional_kl()?;
        let indices = (0..self.config.batch_size)
            .map(|_| self.sampler.sample(rng))
            .collect::<Result<Vec<_>>>()?;
        self.advance(indices, cond_kl)
    }

    /// Take one step on a prescribed batch of indices. The recorded `Q_t`
    /// values are still those of the current weights.
    pub fn step_with_indices(&mut self, indices: &[usize]) -> Result<&IterationRecord> {
        self.check_not_done()?;
        if indices.len() != self.config.batch_size {
            return Err(Error::DimensionMismatch {
                expected: self.config.batch_size,
                actual: indices.len(),
            });
        }
        let cond_kl = self.current_conditional_kl()?;
        self.advance(indices.to_vec(), cond_kl)
    }

    fn check_not_done(&self) -> Result<()> {
        if self.is_done() {
            Err(Error::param("iterations", "training already ran all iterations"))
        } else {
            Ok(())
        }
    }

    fn current_conditional_kl(&self) -> Result<Option<f64>> {
        if self.config.track_full_conditional_kl {
            conditional_kl(&self.sampler).map(Some)
        } else {
            Ok(None)
        }
    }

    fn advance(
        &mut self,
        indices: Vec<usize>,
        conditional_kl: Option<f64>,
    ) -> Result<&IterationRecord> {
        let n = self.data.len();
        let t = self.t + 1;
        let nf = n as f64;
        // The sampler is untouched until every draw is recorded, so these
        // are the pre-draw probabilities. The ratio is formed as n w / W so
        // that uniform weights give exactly ln 1 = 0.
        let total = self.sampler.total();
        let mut probs = Vec::with_capacity(indices.len());
        let mut log_ratio = 0.0;
        for &i in &indices {
            let w = self.sampler.weight(i)?;
            if !(w > 0.0) {
                return Err(Error::param("indices", "index has zero sampling probability"));
            }
            probs.push(w / total);
            log_ratio += libm::log(nf * w / total);
        }
        let mean_accum = self.accum_total / nf;
        let mut accum_excess = 0.0;
        for &i in &indices {
            accum_excess += self.accumulators[i] - mean_accum;
        }

        let eta = self.schedule.step_size(t)?;
        let scale = 1.0 / indices.len() as f64;
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_objective = 0.0;
        for &i in &indices {
            let z = self.data.get(i)?;
            accumulate_objective_grad(&self.h, z, self.objective.mu, scale, &mut self.grad)?;
            batch_objective += objective_value(&self.h, z, self.objective.mu)?;
        }
        batch_objective *= scale;
        self.rule
            .step(&mut self.h, &self.grad, eta, self.objective.domain_radius)?;

        let alpha = self.config.amplitude;
        let decay = self.config.decay;
        let mut updated = Vec::with_capacity(indices.len());
        let mut utilities = Vec::with_capacity(indices.len());
        for &i in &indices {
            if self.last_seen[i] == t {
                continue;
            }
            self.last_seen[i] = t;
            let u = utility(self.config.utility, self.data.get(i)?, &self.h)?;
            let old = self.accumulators[i];
            let new = decay * old + u;
            self.accumulators[i] = new;
            self.accum_total += new - old;
            self.log_weights[i] = decay * self.log_weights[i] + alpha * u;
            self.sampler.set_weight(i, libm::exp(self.log_weights[i]))?;
            self.occurrences[i] += 1;
            updated.push(i);
            utilities.push(u);
        }

        self.t = t;
        self.records.push(IterationRecord {
            t,
            indices,
            probs,
            log_ratio,
            accum_excess,
            updated,
            utilities,
            step_size: eta,
            batch_objective,
            conditional_kl,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    /// Final hypothesis and the trace.
    pub fn finish(self) -> (Hypothesis, TrainTrace) {
        let trace = TrainTrace {
            n: self.data.len(),
            config: self.config,
            records: self.records,
            occurrences: self.occurrences,
            accumulators: self.accumulators,
            log_weights: self.log_weights,
        };
        (self.h, trace)
    }
}

/// Run all configured iterations with a fresh weight tree.
pub fn train<R: RngCore + ?Sized>(
    data: &Dataset,
    config: SamplerConfig,
    schedule: StepSchedule,
    rule: UpdateRuleState,
    objective: ObjectiveConfig,
    h0: Hypothesis,
    rng: &mut R,
) -> Result<(Hypothesis, TrainTrace)> {
    let mut trainer = AdaptiveTrainer::new(data, config, schedule, rule, objective, h0)?;
    while !trainer.is_done() {
        trainer.step(rng)?;
    }
    Ok(trainer.finish())
}

/// `KL(Q || uniform) = sum_i Q(i) ln(n Q(i))`, zero iff the weights are
/// all equal.
pub fn conditional_kl<S: IndexSampler>(sampler: &S) -> Result<f64> {
    let n = sampler.len();
    let weights = (0..n).map(|i| sampler.weight(i)).collect::<Result<Vec<_>>>()?;
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotalWeight);
    }
    let nf = n as f64;
    let kl: f64 = weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| (w / total) * libm::log(nf * w / total))
        .sum();
    Ok(kl.max(0.0))
}

/// `sum_i q(i) U_i - (1/alpha) KL(q || q_ref^lambda)`, where `q_ref^lambda`
/// is `q_ref` raised to `lambda` and renormalized. The distribution from
/// [`reweighted_distribution`] maximizes it over the simplex.
pub fn reweighting_objective(
    q_next: &[f64],
    utilities: &[f64],
    q_ref: &[f64],
    alpha: f64,
    decay: f64,
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::param("alpha", "objective is undefined for alpha = 0"));
    }
    if q_next.len() != utilities.len() || q_ref.len() != utilities.len() {
        return Err(Error::DimensionMismatch {
            expected: utilities.len(),
            actual: q_next.len().max(q_ref.len()),
        });
    }
    let tempered = tempered(q_ref, decay)?;
    let gain: f64 = q_next.iter().zip(utilities).map(|(q, u)| q * u).sum();
    let mut kl = 0.0;
    for (q, r) in q_next.iter().zip(&tempered) {
        if *q > 0.0 {
            if !(*r > 0.0) {
                return Ok(f64::NEG_INFINITY);
            }
            kl += q * libm::log(q / r);
        }
    }
    Ok(gain - kl / alpha)
}

fn tempered(q_ref: &[f64], decay: f64) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = q_ref
        .iter()
        .map(|&q| if q > 0.0 { libm::pow(q, decay) } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotalWeight);
    }
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Closed-form maximizer `q(i) ∝ q_ref(i)^lambda exp(alpha U_i)`.
pub fn reweighted_distribution(
    q_ref: &[f64],
    utilities: &[f64],
    alpha: f64,
    decay: f64,
) -> Result<Vec<f64>> {
    if q_ref.len() != utilities.len() {
        return Err(Error::DimensionMismatch {
            expected: q_ref.len(),
            actual: utilities.len(),
        });
    }
    let logs: Vec<f64> = q_ref
        .iter()
        .zip(utilities)
        .map(|(&q, &u)| {
            if q > 0.0 {
                decay * libm::log(q) + alpha * u
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::ZeroTotalWeight);
    }
    let mut out: Vec<f64> = logs.iter().map(|l| libm::exp(l - max)).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}
