//! Stability coefficients, divergences and generalization bounds for
//! randomized learning algorithms, plus KL statistics computed from
//! adaptive-sampling traces.
//!
//! Bounds are stated for a posterior `Q` over index sequences measured
//! against the uniform prior `P`. The product-measure KL of a sequence
//! posterior is never materialized; it is the sum of per-iteration
//! conditional divergences, which is exactly what a trace records.

use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptiveTrainer, SamplerConfig, TrainTrace};
use crate::error::{Error, Result};
use crate::model::{Dataset, Hypothesis, ObjectiveConfig};
use crate::optim::{StepSchedule, UpdateRuleState};
use crate::weighted_sampler::IndexSampler;

/// Largest number of index paths [`enumerate_exact`] will walk.
pub const MAX_ENUMERATED_PATHS: u64 = 1024;

fn at_least_one(name: &'static str, v: u64) -> Result<f64> {
    if v >= 1 {
        Ok(v as f64)
    } else {
        Err(Error::param(name, "must be >= 1"))
    }
}

fn nonneg(name: &'static str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::param(name, "must be finite and >= 0"))
    }
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::param(name, "must be finite and > 0"))
    }
}

fn confidence(delta: f64) -> Result<f64> {
    if delta > 0.0 && delta < 1.0 {
        Ok(delta)
    } else {
        Err(Error::param("delta", "must lie in (0, 1)"))
    }
}

/// Which stability result produced a set of coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilitySource {
    ConvexDecreasingStep,
    NonConvexDecreasingStep,
    PointwiseDataDependent,
    StronglyConvex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCoefficients {
    /// Uniform (or pointwise hypothesis) stability in the data, `beta`.
    pub beta_data: f64,
    /// Uniform stability in the index sequence, `gamma`, when known.
    pub gamma_hyper: Option<f64>,
    pub source: StabilitySource,
}

impl StabilityCoefficients {
    /// `2 beta + M / n`, the generalization error's own data stability.
    pub fn generalization_error_stability(&self, max_loss: f64, n: u64) -> f64 {
        2.0 * self.beta_data + max_loss / n as f64
    }
}

/// Convex, `L`-Lipschitz, smooth objective with step sizes at most
/// `eta / t`: `2 L^2 eta (ln T + 1) / n`.
pub fn stab_convex(lipschitz: f64, eta: f64, iterations: u64, n: u64) -> Result<f64> {
    let t = at_least_one("iterations", iterations)?;
    let n = at_least_one("n", n)?;
    let l = nonneg("lipschitz", lipschitz)?;
    let eta = nonneg("eta", eta)?;
    Ok(2.0 * l * l * eta * (libm::log(t) + 1.0) / n)
}

/// Non-convex smooth objective with step sizes at most `eta / t`:
///
/// ```text
/// (M + 1/(b eta)) / (n - 1) * (2 L^2 eta)^(1/(b eta + 1)) * T^(b eta/(b eta + 1))
/// ```
pub fn stab_nonconvex(
    lipschitz: f64,
    smooth_beta: f64,
    eta: f64,
    iterations: u64,
    n: u64,
    max_loss: f64,
) -> Result<f64> {
    if n < 2 {
        return Err(Error::param("n", "must be >= 2"));
    }
    let t = at_least_one("iterations", iterations)?;
    let l = nonneg("lipschitz", lipschitz)?;
    let b = positive("smooth_beta", smooth_beta)?;
    let eta = positive("eta", eta)?;
    let m = positive("max_loss", max_loss)?;
    let be = b * eta;
    Ok((m + 1.0 / be) / (n as f64 - 1.0)
        * libm::pow(2.0 * l * l * eta, 1.0 / (be + 1.0))
        * libm::pow(t, be / (be + 1.0)))
}

/// Data-dependent pointwise hypothesis stability for a convex objective:
/// `2 L eta (ln T + 1) sqrt(2 b E[L(h0, z)]) / n`, where `risk_h0` is an
/// estimate of the initial hypothesis' risk.
pub fn stab_pointwise_datadep(
    lipschitz: f64,
    eta: f64,
    iterations: u64,
    n: u64,
    smooth_beta: f64,
    risk_h0: f64,
) -> Result<f64> {
    let t = at_least_one("iterations", iterations)?;
    let n = at_least_one("n", n)?;
    let l = nonneg("lipschitz", lipschitz)?;
    let eta = nonneg("eta", eta)?;
    let b = nonneg("smooth_beta", smooth_beta)?;
    let risk = nonneg("risk_h0", risk_h0)?;
    Ok(2.0 * l * eta * (libm::log(t) + 1.0) * libm::sqrt(2.0 * b * risk) / n)
}

/// `mu`-strongly convex objective with `eta_t = 1/(mu t + beta)`:
/// `beta = 2 L^2 / (mu n)`, `gamma = 2 L^2 / (mu T)`.
pub fn stab_strongly_convex(
    lipschitz: f64,
    mu: f64,
    n: u64,
    iterations: u64,
) -> Result<StabilityCoefficients> {
    let mu = positive("mu", mu)?;
    let nf = at_least_one("n", n)?;
    let t = at_least_one("iterations", iterations)?;
    let l = nonneg("lipschitz", lipschitz)?;
    Ok(StabilityCoefficients {
        beta_data: 2.0 * l * l / (mu * nf),
        gamma_hyper: Some(2.0 * l * l / (mu * t)),
        source: StabilitySource::StronglyConvex,
    })
}

fn check_pair(q: &[f64], p: &[f64]) -> Result<()> {
    if q.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    if q.is_empty() {
        return Err(Error::Empty("distribution"));
    }
    for (name, d) in [("q", q), ("p", p)] {
        if d.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::param(name, "entries must be finite and >= 0"));
        }
        let s: f64 = d.iter().sum();
        if libm::fabs(s - 1.0) > 1e-9 {
            return Err(Error::param(name, "must sum to 1"));
        }
    }
    if q.iter().zip(p).any(|(qi, pi)| *qi > 0.0 && *pi == 0.0) {
        return Err(Error::param("q", "not absolutely continuous with respect to p"));
    }
    Ok(())
}

/// `KL(q || p) = sum q ln(q / p)`.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> Result<f64> {
    check_pair(q, p)?;
    let kl: f64 = q
        .iter()
        .zip(p)
        .filter(|(qi, _)| **qi > 0.0)
        .map(|(qi, pi)| qi * libm::log(qi / pi))
        .sum();
    Ok(kl.max(0.0))
}

/// `chi^2(q || p) = E_p[(q/p)^2] - 1 = sum q^2 / p - 1`.
pub fn chisq_divergence(q: &[f64], p: &[f64]) -> Result<f64> {
    check_pair(q, p)?;
    let s: f64 = q
        .iter()
        .zip(p)
        .filter(|(qi, _)| **qi > 0.0)
        .map(|(qi, pi)| qi * qi / pi)
        .sum();
    Ok((s - 1.0).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFormula {
    /// `sqrt((chi2 + 1)/delta * (2M^2/n + 12 M beta))`.
    ChiSquared,
    /// `beta + sqrt(2 (KL + ln(2/delta)) ((M + 2 n beta)^2 / n + 4 T gamma^2))`.
    Kl,
    /// The KL bound with strongly convex SGD's coefficients substituted.
    SgdStronglyConvex,
    /// Holds jointly over data and one draw of the index sequence.
    Derandomized,
}

/// A bound value with every input echoed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub formula: BoundFormula,
    pub value: f64,
    pub n: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    pub delta: f64,
    pub max_loss: f64,
    /// The chi-squared or KL divergence fed to the bound.
    pub divergence: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_data: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_hyper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

impl BoundReport {
    /// Re-evaluate the formula from the echoed inputs.
    pub fn recompute(&self) -> Result<BoundReport> {
        let missing = |name| Error::param(name, "not recorded in this report");
        let t = || self.iterations.ok_or_else(|| missing("iterations"));
        let beta = || self.beta_data.ok_or_else(|| missing("beta_data"));
        let gamma = || self.gamma_hyper.ok_or_else(|| missing("gamma_hyper"));
        match self.formula {
            BoundFormula::ChiSquared => {
                gen_bound_chisq(self.divergence, self.max_loss, self.n, beta()?, self.delta)
            }
            BoundFormula::Kl => gen_bound_kl(
                self.divergence,
                self.max_loss,
                self.n,
                t()?,
                beta()?,
                gamma()?,
                self.delta,
            ),
            BoundFormula::SgdStronglyConvex => gen_bound_sgd_strongly_convex(
                self.divergence,
                self.max_loss,
                self.lipschitz.ok_or_else(|| missing("lipschitz"))?,
                self.mu.ok_or_else(|| missing("mu"))?,
                self.n,
                t()?,
                self.delta,
            ),
            BoundFormula::Derandomized => gen_bound_derand(
                self.divergence,
                self.max_loss,
                self.n,
                t()?,
                beta()?,
                gamma()?,
                self.delta,
            ),
        }
    }
}

/// Bound from pointwise hypothesis stability and the chi-squared divergence;
/// polynomial in `1/delta`.
pub fn gen_bound_chisq(
    chisq: f64,
    max_loss: f64,
    n: u64,
    beta_data: f64,
    delta: f64,
) -> Result<BoundReport> {
    let chi = nonneg("chisq", chisq)?;
    let m = positive("max_loss", max_loss)?;
    let nf = at_least_one("n", n)?;
    let beta = nonneg("beta_data", beta_data)?;
    let delta = confidence(delta)?;
    let value = libm::sqrt((chi + 1.0) / delta * (2.0 * m * m / nf + 12.0 * m * beta));
    Ok(BoundReport {
        formula: BoundFormula::ChiSquared,
        value,
        n,
        iterations: None,
        delta,
        max_loss: m,
        divergence: chi,
        beta_data: Some(beta),
        gamma_hyper: None,
        lipschitz: None,
        mu: None,
    })
}

fn kl_core(kl: f64, log_term: f64, m: f64, n: f64, t: f64, beta: f64, gamma: f64) -> f64 {
    let spread = (m + 2.0 * n * beta) * (m + 2.0 * n * beta) / n + 4.0 * t * gamma * gamma;
    libm::sqrt(2.0 * (kl + log_term) * spread)
}

/// Bound from `(beta, gamma)`-uniform stability and the KL divergence;
/// logarithmic in `1/delta`.
pub fn gen_bound_kl(
    kl: f64,
    max_loss: f64,
    n: u64,
    iterations: u64,
    beta_data: f64,
    gamma_hyper: f64,
    delta: f64,
) -> Result<BoundReport> {
    let kl = nonneg("kl", kl)?;
    let m = positive("max_loss", max_loss)?;
    let nf = at_least_one("n", n)?;
    let t = at_least_one("iterations", iterations)?;
    let beta = nonneg("beta_data", beta_data)?;
    let gamma = nonneg("gamma_hyper", gamma_hyper)?;
    let delta = confidence(delta)?;
    let value = beta + kl_core(kl, libm::log(2.0 / delta), m, nf, t, beta, gamma);
    Ok(BoundReport {
        formula: BoundFormula::Kl,
        value,
        n,
        iterations: Some(iterations),
        delta,
        max_loss: m,
        divergence: kl,
        beta_data: Some(beta),
        gamma_hyper: Some(gamma),
        lipschitz: None,
        mu: None,
    })
}

/// KL bound for SGD on a `mu`-strongly convex objective with
/// `eta_t = 1/(mu t + beta)`, written out in closed form:
///
/// ```text
/// 2L^2/(mu n) + sqrt(2 (KL + ln(2/delta)) ((M + 4L^2/mu)^2 / n + 16 L^4 / (mu^2 T)))
/// ```
pub fn gen_bound_sgd_strongly_convex(
    kl: f64,
    max_loss: f64,
    lipschitz: f64,
    mu: f64,
    n: u64,
    iterations: u64,
    delta: f64,
) -> Result<BoundReport> {
    let kl = nonneg("kl", kl)?;
    let m = positive("max_loss", max_loss)?;
    let l = nonneg("lipschitz", lipschitz)?;
    let mu = positive("mu", mu)?;
    let nf = at_least_one("n", n)?;
    let t = at_least_one("iterations", iterations)?;
    let delta = confidence(delta)?;
    let l2 = l * l;
    let head = m + 4.0 * l2 / mu;
    let spread = head * head / nf + 16.0 * l2 * l2 / (mu * mu * t);
    let value = 2.0 * l2 / (mu * nf) + libm::sqrt(2.0 * (kl + libm::log(2.0 / delta)) * spread);
    Ok(BoundReport {
        formula: BoundFormula::SgdStronglyConvex,
        value,
        n,
        iterations: Some(iterations),
        delta,
        max_loss: m,
        divergence: kl,
        beta_data: Some(2.0 * l2 / (mu * nf)),
        gamma_hyper: Some(2.0 * l2 / (mu * t)),
        lipschitz: Some(l),
        mu: Some(mu),
    })
}

/// Derandomized bound for posterior product measures:
/// `beta + gamma sqrt(2 T ln(2/delta)) + sqrt(2 (KL + ln(4/delta)) (...))`.
pub fn gen_bound_derand(
    kl: f64,
    max_loss: f64,
    n: u64,
    iterations: u64,
    beta_data: f64,
    gamma_hyper: f64,
    delta: f64,
) -> Result<BoundReport> {
    let kl = nonneg("kl", kl)?;
    let m = positive("max_loss", max_loss)?;
    let nf = at_least_one("n", n)?;
    let t = at_least_one("iterations", iterations)?;
    let beta = nonneg("beta_data", beta_data)?;
    let gamma = nonneg("gamma_hyper", gamma_hyper)?;
    let delta = confidence(delta)?;
    let value = beta
        + gamma * libm::sqrt(2.0 * t * libm::log(2.0 / delta))
        + kl_core(kl, libm::log(4.0 / delta), m, nf, t, beta, gamma);
    Ok(BoundReport {
        formula: BoundFormula::Derandomized,
        value,
        n,
        iterations: Some(iterations),
        delta,
        max_loss: m,
        divergence: kl,
        beta_data: Some(beta),
        gamma_hyper: Some(gamma),
        lipschitz: None,
        mu: None,
    })
}

/// Path statistic whose expectation bounds `KL(Q || P)` for single-draw
/// adaptive sampling:
///
/// ```text
/// alpha * sum_{t >= 2} ( S(i_t, t) - (1/n) sum_i S(i, t) )
/// ```
///
/// with `S(i, t)` the discounted utility sum of `i` at the start of
/// iteration `t`. Mini-batch traces are rejected.
pub fn kl_bound_relative_utility(trace: &TrainTrace) -> Result<f64> {
    if trace.config.batch_size != 1 {
        return Err(Error::param(
            "batch_size",
            "the relative-utility statistic is defined for single draws only",
        ));
    }
    let alpha = trace.config.amplitude;
    Ok(alpha * trace.records.iter().skip(1).map(|r| r.accum_excess).sum::<f64>())
}

/// `alpha / (1 - lambda) * sum_{t=1}^{T-1} U(z_{i_t}, h_t)` for nonnegative
/// utilities.
///
/// For mini-batches of size `B` the sum runs over every re-weighted index
/// and the prefactor becomes `alpha B / (1 - lambda)`: an index can be drawn
/// up to `B` times in each later iteration, and each draw pays its current
/// log-weight.
pub fn kl_bound_utility_sum(trace: &TrainTrace) -> Result<f64> {
    let cfg = &trace.config;
    let t_max = trace.records.len().saturating_sub(1);
    let mut total = 0.0;
    for r in &trace.records[..t_max] {
        for &u in &r.utilities {
            if !(u >= 0.0) {
                return Err(Error::param("utility", "negative utility in trace"));
            }
            total += u;
        }
    }
    // the final iteration's utilities still have to be nonnegative
    if let Some(last) = trace.records.last() {
        if last.utilities.iter().any(|u| !(*u >= 0.0)) {
            return Err(Error::param("utility", "negative utility in trace"));
        }
    }
    Ok(cfg.amplitude * cfg.batch_size as f64 / (1.0 - cfg.decay) * total)
}

/// Exact expectations over every index path of a tiny instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactDivergence {
    /// `KL(Q || P)` against the uniform prior on index sequences.
    pub kl: f64,
    /// Expectation of [`kl_bound_relative_utility`].
    pub relative_utility_bound: f64,
    /// Expectation of [`kl_bound_utility_sum`].
    pub utility_sum_bound: f64,
    /// Paths with nonzero probability.
    pub paths: u64,
    /// Sum of path probabilities; 1 up to rounding.
    pub total_probability: f64,
}

#[derive(Default)]
struct EnumSums {
    kl: f64,
    relative: f64,
    utility_sum: f64,
    paths: u64,
    prob: f64,
}

/// Walk all `n^T` index sequences of single-draw adaptive training,
/// replaying the deterministic training along each path, and return the
/// exact KL divergence from the uniform prior together with the exact
/// expectations of both trace statistics.
///
/// The KL is computed from path probabilities directly,
/// `sum_path Q(path) ln(Q(path) n^T)`, not from the recorded log-ratios.
pub fn enumerate_exact(
    data: &Dataset,
    config: SamplerConfig,
    schedule: StepSchedule,
    rule: UpdateRuleState,
    objective: ObjectiveConfig,
    h0: Hypothesis,
) -> Result<ExactDivergence> {
    if config.batch_size != 1 {
        return Err(Error::param("batch_size", "enumeration needs single draws"));
    }
    let n = data.len() as u64;
    let paths = n.checked_pow(u32::try_from(config.iterations).unwrap_or(u32::MAX));
    if paths.is_none_or(|p| p > MAX_ENUMERATED_PATHS) {
        return Err(Error::TooLarge(alloc::format!(
            "{n}^{} paths exceeds {MAX_ENUMERATED_PATHS}",
            config.iterations
        )));
    }
    let root = AdaptiveTrainer::new(data, config, schedule, rule, objective, h0)?;
    let log_prior = config.iterations as f64 * libm::log(n as f64);
    let mut sums = EnumSums::default();
    visit(root, 0.0, log_prior, &mut sums)?;
    Ok(ExactDivergence {
        kl: sums.kl.max(0.0),
        relative_utility_bound: sums.relative,
        utility_sum_bound: sums.utility_sum,
        paths: sums.paths,
        total_probability: sums.prob,
    })
}

fn visit(
    trainer: AdaptiveTrainer<'_>,
    log_prob: f64,
    log_prior: f64,
    sums: &mut EnumSums,
) -> Result<()> {
    if trainer.is_done() {
        let p = libm::exp(log_prob);
        let (_, trace) = trainer.finish();
        sums.kl += p * (log_prob + log_prior);
        sums.relative += p * kl_bound_relative_utility(&trace)?;
        sums.utility_sum += p * kl_bound_utility_sum(&trace)?;
        sums.paths += 1;
        sums.prob += p;
        return Ok(());
    }
    let n = trainer.sampler().len();
    for i in 0..n {
        let q = trainer.sampler().prob(i)?;
        if q == 0.0 {
            continue;
        }
        let mut child = trainer.clone();
        child.step_with_indices(&[i])?;
        visit(child, log_prob + libm::log(q), log_prior, sums)?;
    }
    Ok(())
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl MonteCarloEstimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Empty("Monte Carlo samples"));
        }
        let k = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / k;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        Ok(MonteCarloEstimate {
            mean,
            std_err: libm::sqrt(var / k),
            samples: xs.len(),
        })
    }

    /// `|mean - target|` in units of the standard error; a zero standard
    /// error demands agreement to `1e-9`.
    pub fn agrees_with(&self, target: f64, sigmas: f64) -> bool {
        let gap = libm::fabs(self.mean - target);
        gap <= sigmas * self.std_err || gap <= 1e-9
    }
}

/// Monte Carlo estimates of the KL divergence and both bound statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStatistics {
    /// Mean of the per-path log-ratio sum; unbiased for `KL(Q || P)`.
    pub kl: MonteCarloEstimate,
    /// Only for single-draw training.
    pub relative_utility_bound: Option<MonteCarloEstimate>,
    pub utility_sum_bound: MonteCarloEstimate,
}

/// Train once per seed and average the trace statistics. Runs are combined
/// in seed order.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_statistics<R, F>(
    data: &Dataset,
    config: SamplerConfig,
    schedule: StepSchedule,
    rule: &UpdateRuleState,
    objective: ObjectiveConfig,
    h0: &Hypothesis,
    seeds: core::ops::Range<u64>,
    mut make_rng: F,
) -> Result<TraceStatistics>
where
    R: RngCore,
    F: FnMut(u64) -> R,
{
    let mut kl = Vec::new();
    let mut rel = Vec::new();
    let mut sum = Vec::new();
    for seed in seeds {
        let mut rng = make_rng(seed);
        let (_, trace) = crate::adaptive::train(
            data,
            config,
            schedule,
            rule.clone(),
            objective,
            h0.clone(),
            &mut rng,
        )?;
        kl.push(trace.log_ratio_sum());
        if config.batch_size == 1 {
            rel.push(kl_bound_relative_utility(&trace)?);
        }
        sum.push(kl_bound_utility_sum(&trace)?);
    }
    Ok(TraceStatistics {
        kl: MonteCarloEstimate::from_samples(&kl)?,
        relative_utility_bound: if rel.is_empty() {
            None
        } else {
            Some(MonteCarloEstimate::from_samples(&rel)?)
        },
        utility_sum_bound: MonteCarloEstimate::from_samples(&sum)?,
    })
}
