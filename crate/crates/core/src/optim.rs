//! Step-size schedules and hypothesis update rules.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Hypothesis;

/// Default AdaGrad denominator offset.
pub const ADAGRAD_EPS: f64 = 1e-8;

/// Step size `eta_t` as a function of the 1-based iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `eta`.
    Constant { eta: f64 },
    /// `eta / (1 + kappa t)`.
    InverseDecay { eta: f64, kappa: f64 },
    /// `1 / (mu t + beta)`.
    StronglyConvex { mu: f64, beta: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant { eta } => positive("eta", eta),
            StepSchedule::InverseDecay { eta, kappa } => {
                positive("eta", eta)?;
                if kappa >= 0.0 && kappa.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("kappa", "must be finite and >= 0"))
                }
            }
            StepSchedule::StronglyConvex { mu, beta } => {
                positive("mu", mu)?;
                positive("beta", beta)
            }
        }
    }

    pub fn step_size(&self, t: u64) -> Result<f64> {
        if t < 1 {
            return Err(Error::param("t", "iterations are counted from 1"));
        }
        self.validate()?;
        let t = t as f64;
        Ok(match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::InverseDecay { eta, kappa } => eta / (1.0 + kappa * t),
            StepSchedule::StronglyConvex { mu, beta } => 1.0 / (mu * t + beta),
        })
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, "must be finite and > 0"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Sgd,
    AdaGrad,
}

/// Mutable state of an update rule. AdaGrad keeps per-coordinate sums of
/// squared gradients; SGD keeps nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRuleState {
    kind: RuleKind,
    accum: Vec<f64>,
    eps: f64,
}

impl UpdateRuleState {
    pub fn sgd() -> Self {
        UpdateRuleState {
            kind: RuleKind::Sgd,
            accum: Vec::new(),
            eps: ADAGRAD_EPS,
        }
    }

    pub fn adagrad(num_params: usize) -> Self {
        Self::adagrad_with_eps(num_params, ADAGRAD_EPS)
    }

    pub fn adagrad_with_eps(num_params: usize, eps: f64) -> Self {
        UpdateRuleState {
            kind: RuleKind::AdaGrad,
            accum: vec![0.0; num_params],
            eps,
        }
    }

    pub fn new(kind: RuleKind, num_params: usize) -> Self {
        match kind {
            RuleKind::Sgd => Self::sgd(),
            RuleKind::AdaGrad => Self::adagrad(num_params),
        }
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accum
    }

    /// Move `h` along an already averaged gradient, then project onto the
    /// ball of radius `radius` if one is given.
    ///
    /// AdaGrad scales the schedule's `eta_t` per coordinate by
    /// `1 / sqrt(accum + eps)`, after adding the squared gradient to the
    /// accumulator.
    pub fn step(
        &mut self,
        h: &mut Hypothesis,
        mean_grad: &[f64],
        eta: f64,
        radius: Option<f64>,
    ) -> Result<()> {
        if mean_grad.len() != h.params().len() {
            return Err(Error::DimensionMismatch {
                expected: h.params().len(),
                actual: mean_grad.len(),
            });
        }
        match self.kind {
            RuleKind::Sgd => {
                for (w, g) in h.params_mut().iter_mut().zip(mean_grad) {
                    *w -= eta * g;
                }
            }
            RuleKind::AdaGrad => {
                if self.accum.len() != mean_grad.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.accum.len(),
                        actual: mean_grad.len(),
                    });
                }
                for ((w, g), a) in h.params_mut().iter_mut().zip(mean_grad).zip(&mut self.accum) {
                    *a += g * g;
                    *w -= eta * g / libm::sqrt(*a + self.eps);
                }
            }
        }
        if let Some(r) = radius {
            h.project(r);
        }
        Ok(())
    }
}

/// One application of the update rule with the plain average of a
/// mini-batch of gradients.
pub fn apply_update(
    h: &Hypothesis,
    grads: &[Vec<f64>],
    t: u64,
    sched: &StepSchedule,
    state: &mut UpdateRuleState,
    radius: Option<f64>,
) -> Result<Hypothesis> {
    let first = grads.first().ok_or(Error::Empty("gradient batch"))?;
    let mut mean = vec![0.0; first.len()];
    for g in grads {
        if g.len() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: g.len(),
            });
        }
        mean.iter_mut().zip(g).for_each(|(m, v)| *m += v);
    }
    let inv = 1.0 / grads.len() as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    let eta = sched.step_size(t)?;
    let mut next = h.clone();
    state.step(&mut next, &mean, eta, radius)?;
    Ok(next)
}
