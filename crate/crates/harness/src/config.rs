//! Experiment configuration: defaults, a flat `key = value` file format
//! whose keys are the CLI flag names, and conversion into core types.

use std::fs;
use std::path::{Path, PathBuf};

use adasamp_core::model::regularity_constants;
use adasamp_core::{
    Dataset, ObjectiveConfig, RegularityConstants, RuleKind, SamplerConfig, StepSchedule,
    UpdateRuleState, UtilityKind,
};
use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use crate::data::SynthSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    InverseDecay,
    StronglyConvex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Training CSV; synthetic data when absent.
    pub data: Option<PathBuf>,
    /// Held-out CSV; with CSV training data and no test file, test metrics
    /// are omitted.
    pub test_data: Option<PathBuf>,
    pub n: usize,
    pub n_test: usize,
    pub dim: usize,
    pub classes: usize,
    pub imbalance: f64,
    pub noise: f64,
    pub separation: f64,
    pub spread: f64,

    pub mu: f64,
    pub max_loss: f64,
    /// Projection radius; `None` picks the default (on iff `mu > 0`).
    pub domain_radius: Option<f64>,

    pub alpha: f64,
    pub lambda: f64,
    pub utility: UtilityKind,
    pub batch: usize,
    pub iters: u64,
    pub track_kl: bool,

    pub schedule: ScheduleKind,
    pub eta: f64,
    pub kappa: f64,
    pub rule: RuleKind,

    pub trials: u64,
    /// Metrics are recorded every `cadence` iterations.
    pub cadence: u64,
    pub delta: f64,
    /// Absolute training-loss target; default `1.2 x` the uniform run's
    /// loss at `T/2`.
    pub target: Option<f64>,
    pub target_factor: f64,
    pub out: Option<PathBuf>,
}

/// Defaults are the desk-scale comparison setting: an imbalanced binary task
/// with overlapping clusters, batches of 100 and a mild amplitude.
impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            data: None,
            test_data: None,
            n: 2000,
            n_test: 1000,
            dim: 10,
            classes: 2,
            imbalance: 0.9,
            noise: 0.0,
            separation: 3.0,
            spread: 1.0,
            mu: 1e-3,
            max_loss: adasamp_core::model::DEFAULT_MAX_LOSS,
            domain_radius: None,
            alpha: 0.5,
            lambda: 0.5,
            utility: UtilityKind::L1,
            batch: 100,
            iters: 4000,
            track_kl: false,
            schedule: ScheduleKind::InverseDecay,
            eta: 0.2,
            kappa: 1e-3,
            rule: RuleKind::Sgd,
            trials: 10,
            cadence: 10,
            delta: 0.05,
            target: None,
            target_factor: 1.2,
            out: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    value
        .parse()
        .with_context(|| format!("invalid value `{value}` for `{key}`"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => bail!("invalid value `{value}` for `{key}`: expected true or false"),
    }
}

pub fn parse_utility(value: &str) -> Result<UtilityKind> {
    match value {
        "01" | "zero-one" | "zero_one" => Ok(UtilityKind::ZeroOne),
        "l1" | "L1" => Ok(UtilityKind::L1),
        _ => bail!("unknown utility `{value}`: expected 01 or l1"),
    }
}

pub fn parse_rule(value: &str) -> Result<RuleKind> {
    match value {
        "sgd" => Ok(RuleKind::Sgd),
        "adagrad" => Ok(RuleKind::AdaGrad),
        _ => bail!("unknown rule `{value}`: expected sgd or adagrad"),
    }
}

pub fn parse_schedule(value: &str) -> Result<ScheduleKind> {
    match value {
        "constant" => Ok(ScheduleKind::Constant),
        "inverse-decay" | "inverse_decay" => Ok(ScheduleKind::InverseDecay),
        "strongly-convex" | "strongly_convex" => Ok(ScheduleKind::StronglyConvex),
        _ => bail!("unknown schedule `{value}`: expected constant, inverse-decay or strongly-convex"),
    }
}

fn optional_f64(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "none" || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl ExperimentConfig {
    /// Set one field by its flag name; `_` and `-` are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "seed" => self.seed = parse(k, value)?,
            "data" => self.data = Some(PathBuf::from(value)),
            "test-data" => self.test_data = Some(PathBuf::from(value)),
            "n" => self.n = parse(k, value)?,
            "n-test" => self.n_test = parse(k, value)?,
            "dim" => self.dim = parse(k, value)?,
            "classes" => self.classes = parse(k, value)?,
            "imbalance" => self.imbalance = parse(k, value)?,
            "noise" => self.noise = parse(k, value)?,
            "separation" => self.separation = parse(k, value)?,
            "spread" => self.spread = parse(k, value)?,
            "mu" => self.mu = parse(k, value)?,
            "max-loss" => self.max_loss = parse(k, value)?,
            "domain-radius" => self.domain_radius = optional_f64(k, value)?,
            "alpha" => self.alpha = parse(k, value)?,
            "lambda" => self.lambda = parse(k, value)?,
            "utility" => self.utility = parse_utility(value)?,
            "batch" => self.batch = parse(k, value)?,
            "iters" => self.iters = parse(k, value)?,
            "track-kl" => self.track_kl = parse_bool(k, value)?,
            "schedule" => self.schedule = parse_schedule(value)?,
            "eta" => self.eta = parse(k, value)?,
            "kappa" => self.kappa = parse(k, value)?,
            "rule" => self.rule = parse_rule(value)?,
            "trials" => self.trials = parse(k, value)?,
            "cadence" => self.cadence = parse(k, value)?,
            "delta" => self.delta = parse(k, value)?,
            "target" => self.target = optional_f64(k, value)?,
            "target-factor" => self.target_factor = parse(k, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => bail!("unknown configuration key `{key}`"),
        }
        Ok(())
    }

    /// Apply a `key = value` file on top of `self`. `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        self.apply_str(&text)
            .with_context(|| format!("in config {}", path.display()))
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected `key = value`", k + 1))?;
            self.set(key, value).with_context(|| format!("line {}", k + 1))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.trials >= 1, "trials must be >= 1");
        ensure!(self.cadence >= 1, "cadence must be >= 1");
        ensure!(self.delta > 0.0 && self.delta < 1.0, "delta must lie in (0, 1)");
        ensure!(
            self.target_factor > 0.0 && self.target_factor.is_finite(),
            "target-factor must be > 0"
        );
        if self.data.is_none() {
            self.synth_spec(self.n).validate()?;
            ensure!(self.n_test >= 1, "n-test must be >= 1");
        }
        if self.test_data.is_some() {
            ensure!(self.data.is_some(), "test-data needs data");
        }
        self.sampler_config(self.alpha).validate()?;
        ensure!(self.mu >= 0.0, "mu must be >= 0");
        ensure!(self.max_loss > 0.0, "max-loss must be > 0");
        ensure!(self.eta > 0.0, "eta must be > 0");
        ensure!(self.kappa >= 0.0, "kappa must be >= 0");
        if self.schedule == ScheduleKind::StronglyConvex {
            ensure!(self.mu > 0.0, "the strongly-convex schedule needs mu > 0");
        }
        Ok(())
    }

    pub fn synth_spec(&self, n: usize) -> SynthSpec {
        SynthSpec {
            n,
            dim: self.dim,
            classes: self.classes,
            imbalance: self.imbalance,
            noise: self.noise,
            separation: self.separation,
            spread: self.spread,
        }
    }

    pub fn sampler_config(&self, alpha: f64) -> SamplerConfig {
        SamplerConfig {
            amplitude: alpha,
            decay: self.lambda,
            utility: self.utility,
            batch_size: self.batch,
            iterations: self.iters,
            track_full_conditional_kl: self.track_kl,
        }
    }

    pub fn objective(&self, ds: &Dataset) -> Result<ObjectiveConfig> {
        let mut obj = ObjectiveConfig::for_dataset(ds, self.mu, self.max_loss)?;
        if self.domain_radius.is_some() {
            obj.domain_radius = self.domain_radius;
            obj.validate()?;
        }
        Ok(obj)
    }

    pub fn regularity(&self, ds: &Dataset) -> Result<RegularityConstants> {
        let obj = self.objective(ds)?;
        Ok(regularity_constants(ds, obj.mu, obj.max_loss, obj.domain_radius)?)
    }

    pub fn step_schedule(&self, reg: &RegularityConstants) -> StepSchedule {
        match self.schedule {
            ScheduleKind::Constant => StepSchedule::Constant { eta: self.eta },
            ScheduleKind::InverseDecay => StepSchedule::InverseDecay {
                eta: self.eta,
                kappa: self.kappa,
            },
            ScheduleKind::StronglyConvex => StepSchedule::StronglyConvex {
                mu: self.mu,
                beta: reg.smooth_beta,
            },
        }
    }

    pub fn rule_state(&self, num_params: usize) -> UpdateRuleState {
        UpdateRuleState::new(self.rule, num_params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_str("# comment\nalpha = 2.5\nutility=01\n\ntrack_kl = true  # inline\nrule = adagrad\n")
            .unwrap();
        assert_eq!(cfg.alpha, 2.5);
        assert_eq!(cfg.utility, UtilityKind::ZeroOne);
        assert!(cfg.track_kl);
        assert_eq!(cfg.rule, RuleKind::AdaGrad);
        cfg.set("alpha", "0.5").unwrap();
        assert_eq!(cfg.alpha, 0.5);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.set("bogus", "1").is_err());
        assert!(cfg.set("n", "-3").is_err());
        assert!(cfg.apply_str("alpha 3").is_err());
        let mut bad = ExperimentConfig { lambda: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        bad.lambda = 0.5;
        bad.delta = 1.0;
        assert!(bad.validate().is_err());
    }
}
