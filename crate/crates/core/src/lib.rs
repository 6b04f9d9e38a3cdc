//! Adaptive-sampling stochastic gradient descent.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the algorithmic
//! pieces only:
//!
//! - [`weighted_sampler`]: a sum-labeled full binary tree giving `O(log n)`
//!   draws and `O(log n)` single-weight updates for a categorical
//!   distribution.
//! - [`model`]: linear softmax models, cross-entropy loss, L2-regularized
//!   objective gradients and their regularity constants.
//! - [`optim`]: step-size schedules, SGD and AdaGrad update rules.
//! - [`adaptive`]: the adaptive sampling trainer. Sampling weights are
//!   re-weighted multiplicatively by a per-example utility with amplitude
//!   `alpha` and decay `lambda`; every iteration is traced.
//! - [`bounds`]: stability coefficients, divergences, PAC-Bayes bounds and
//!   the trace-driven KL statistics, with an exact path-enumeration oracle.
//!
//! IO, experiment orchestration and the CLI live in `adasamp-harness`.
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adaptive;
pub mod bounds;
mod error;
pub mod model;
pub mod optim;
pub mod rng;
pub mod weighted_sampler;

pub use adaptive::{
    train, AdaptiveTrainer, IterationRecord, SamplerConfig, TrainTrace, UtilityKind,
};
pub use error::{Error, Result};
pub use model::{Dataset, Example, Hypothesis, ObjectiveConfig, RegularityConstants};
pub use optim::{RuleKind, StepSchedule, UpdateRuleState};
pub use weighted_sampler::{IndexSampler, WeightTree};
