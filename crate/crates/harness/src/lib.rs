//! Experiment harness for adaptive-sampling SGD: synthetic and CSV data,
//! uniform-vs-adaptive comparisons with bound reporting, empirical
//! stability probes and sampler checks. The `adasamp` binary wraps it.

pub mod config;
pub mod data;
pub mod experiment;
pub mod numfmt;
pub mod seeds;
pub mod stability;
pub mod verify;

pub use config::ExperimentConfig;
pub use experiment::{compare, run_experiment, Arm, ExperimentOutput, MetricsRecord};
