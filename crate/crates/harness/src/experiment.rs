//! Uniform-vs-adaptive training runs with learning curves, trace KL
//! statistics and generalization-bound reports.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use adasamp_core::bounds::{
    gen_bound_derand, gen_bound_kl, gen_bound_sgd_strongly_convex, kl_bound_relative_utility,
    kl_bound_utility_sum, stab_convex, stab_nonconvex, stab_pointwise_datadep,
    stab_strongly_convex, BoundFormula, BoundReport, StabilityCoefficients,
};
use adasamp_core::model::{accuracy, empirical_risk, mean_surrogate_loss};
use adasamp_core::{
    AdaptiveTrainer, Dataset, Hypothesis, ObjectiveConfig, RegularityConstants, RuleKind,
    StepSchedule,
};
use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ScheduleKind};
use crate::data::{load_csv, synth_data};
use crate::numfmt::{fmt_f64, to_json_line, to_json_pretty};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Uniform,
    Adaptive,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Uniform => "uniform",
            Arm::Adaptive => "adaptive",
        }
    }
}

/// Training and held-out data for one experiment.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Option<Dataset>,
    /// Flipped-label positions of a synthetic training set.
    pub flipped: Vec<usize>,
}

pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    match &cfg.data {
        Some(path) => Ok(Splits {
            train: load_csv(path)?,
            test: cfg.test_data.as_deref().map(load_csv).transpose()?,
            flipped: Vec::new(),
        }),
        None => {
            let seed_of = |id| {
                use rand::RngCore;
                seeds::stream(cfg.seed, id).next_u64()
            };
            let train = synth_data(&cfg.synth_spec(cfg.n), seed_of(seeds::TRAIN_DATA))?;
            let test = synth_data(&cfg.synth_spec(cfg.n_test), seed_of(seeds::TEST_DATA))?;
            Ok(Splits {
                train: train.data,
                test: Some(test.data),
                flipped: train.flipped,
            })
        }
    }
}

/// One learning-curve point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub arm: Arm,
    pub trial: u64,
    pub alpha: f64,
    pub t: u64,
    /// Empirical risk under the `M`-clamped loss.
    pub train_risk: f64,
    /// Mean unclamped cross-entropy on the training set.
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// Held-out estimate of the risk.
    pub test_risk: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// `KL(Q_t || uniform)` of the sampling distribution used at `t`.
    pub conditional_kl: Option<f64>,
    /// Utility-sum KL bound statistic of the run truncated at `t`.
    pub utility_sum_kl: f64,
    /// Running sum of `ln(n Q_s(i_s))`.
    pub log_ratio_sum: f64,
}

const CSV_HEADER: &str = "arm,trial,alpha,t,train_risk,train_loss,train_accuracy,test_risk,test_accuracy,conditional_kl,utility_sum_kl,log_ratio_sum";

impl MetricsRecord {
    fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.arm.name(),
            self.trial,
            fmt_f64(self.alpha),
            self.t,
            fmt_f64(self.train_risk),
            fmt_f64(self.train_loss),
            fmt_f64(self.train_accuracy),
            opt(self.test_risk),
            opt(self.test_accuracy),
            opt(self.conditional_kl),
            fmt_f64(self.utility_sum_kl),
            fmt_f64(self.log_ratio_sum),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub arm: Arm,
    pub trial: u64,
    pub alpha: f64,
    pub final_train_risk: f64,
    pub final_train_loss: f64,
    pub final_train_accuracy: f64,
    pub final_test_risk: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    /// Training loss after `T/2` iterations.
    pub half_way_train_loss: f64,
    pub target: Option<f64>,
    /// First recorded iteration with training loss at or below `target`.
    pub iterations_to_target: Option<u64>,
    /// Utility-sum statistic of the full run; the KL fed to the bounds.
    pub utility_sum_kl: f64,
    /// Relative-utility statistic; single-draw runs only.
    pub relative_utility_kl: Option<f64>,
    /// Single-path unbiased estimate of `KL(Q || P)`.
    pub log_ratio_sum: f64,
    pub conditional_kl_first_quarter: Option<f64>,
    pub conditional_kl_last_quarter: Option<f64>,
    pub bounds: Vec<BoundReport>,
}

/// Stability coefficients implied by the configuration, with the schedule
/// conditions each result assumes echoed rather than enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub regularity: RegularityConstants,
    pub n: u64,
    pub iters: u64,
    /// Smallest `eta'` with `eta_t <= eta' / t` for all `t`, when one exists
    /// and the rule is plain SGD.
    pub eta_over_t: Option<f64>,
    /// Whether the run uses SGD with `eta_t = 1/(mu t + beta)`.
    pub strongly_convex_schedule: bool,
    pub convex_beta: Option<f64>,
    pub nonconvex_beta: Option<f64>,
    pub pointwise_beta: Option<f64>,
    /// Held-out estimate of the initial hypothesis' risk.
    pub risk_h0: f64,
    pub strongly_convex: Option<StabilityCoefficients>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianBound {
    pub formula: BoundFormula,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub alpha: f64,
    pub trials: usize,
    pub median_final_train_loss: f64,
    pub median_final_train_risk: f64,
    pub median_final_test_risk: Option<f64>,
    /// Runs that never reach the target count as infinitely slow; `None`
    /// when that makes the median infinite or no target is set.
    pub median_iterations_to_target: Option<f64>,
    pub reached_target: usize,
    pub median_utility_sum_kl: f64,
    pub mean_utility_sum_kl: f64,
    pub median_log_ratio_sum: f64,
    pub median_bounds: Vec<MedianBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// False when any trial failed; the failing trials are listed.
    pub complete: bool,
    pub errors: Vec<String>,
    pub config: ExperimentConfig,
    pub n_train: usize,
    pub n_test: Option<usize>,
    pub flipped_labels: usize,
    pub stability: StabilitySummary,
    pub trials: Vec<TrialSummary>,
    pub arms: Vec<ArmSummary>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<MetricsRecord>,
    pub report: ExperimentReport,
}

impl ExperimentOutput {
    /// The metrics stream as JSON lines.
    pub fn jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&to_json_line(r)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    /// `metrics.jsonl`, `metrics.csv` and `report.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let put = |name: &str, body: &str| -> Result<()> {
            let path = dir.join(name);
            let mut w = BufWriter::new(
                File::create(&path).with_context(|| format!("cannot create {}", path.display()))?,
            );
            w.write_all(body.as_bytes())?;
            w.flush()?;
            Ok(())
        };
        put("metrics.jsonl", &self.jsonl()?)?;
        put("metrics.csv", &self.csv())?;
        put("report.json", &(to_json_pretty(&self.report)? + "\n"))?;
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn stability_summary(
    cfg: &ExperimentConfig,
    splits: &Splits,
    reg: &RegularityConstants,
) -> Result<StabilitySummary> {
    let n = splits.train.len() as u64;
    let t = cfg.iters;
    let sgd = cfg.rule == RuleKind::Sgd;
    let eta_over_t = match cfg.schedule {
        _ if !sgd => None,
        ScheduleKind::Constant => None,
        ScheduleKind::InverseDecay => (cfg.kappa > 0.0).then(|| cfg.eta / cfg.kappa),
        ScheduleKind::StronglyConvex => Some(1.0 / cfg.mu),
    };
    let h0 = Hypothesis::for_dataset(&splits.train);
    let held_out = splits.test.as_ref().unwrap_or(&splits.train);
    let risk_h0 = empirical_risk(&h0, held_out, cfg.max_loss)?;
    let l = reg.lipschitz;
    Ok(StabilitySummary {
        regularity: *reg,
        n,
        iters: t,
        eta_over_t,
        strongly_convex_schedule: sgd && cfg.schedule == ScheduleKind::StronglyConvex,
        convex_beta: eta_over_t.map(|e| stab_convex(l, e, t, n)).transpose()?,
        nonconvex_beta: match eta_over_t {
            Some(e) if n >= 2 => Some(stab_nonconvex(l, reg.smooth_beta, e, t, n, cfg.max_loss)?),
            _ => None,
        },
        pointwise_beta: eta_over_t
            .map(|e| stab_pointwise_datadep(l, e, t, n, reg.smooth_beta, risk_h0))
            .transpose()?,
        risk_h0,
        strongly_convex: (cfg.mu > 0.0)
            .then(|| stab_strongly_convex(l, cfg.mu, n, t))
            .transpose()?,
    })
}

fn bound_reports(
    cfg: &ExperimentConfig,
    stab: &StabilitySummary,
    kl: f64,
) -> Result<Vec<BoundReport>> {
    let Some(sc) = stab.strongly_convex else {
        return Ok(Vec::new());
    };
    let gamma = sc.gamma_hyper.unwrap_or(0.0);
    let (m, n, t, d) = (cfg.max_loss, stab.n, stab.iters, cfg.delta);
    Ok(vec![
        gen_bound_kl(kl, m, n, t, sc.beta_data, gamma, d)?,
        gen_bound_sgd_strongly_convex(kl, m, stab.regularity.lipschitz, cfg.mu, n, t, d)?,
        gen_bound_derand(kl, m, n, t, sc.beta_data, gamma, d)?,
    ])
}

struct Curve {
    train_risk: f64,
    train_loss: f64,
    train_accuracy: f64,
    test_risk: Option<f64>,
    test_accuracy: Option<f64>,
}

fn evaluate(h: &Hypothesis, splits: &Splits, max_loss: f64) -> Result<Curve> {
    let test = splits.test.as_ref();
    Ok(Curve {
        train_risk: empirical_risk(h, &splits.train, max_loss)?,
        train_loss: mean_surrogate_loss(h, &splits.train)?,
        train_accuracy: accuracy(h, &splits.train)?,
        test_risk: test.map(|ds| empirical_risk(h, ds, max_loss)).transpose()?,
        test_accuracy: test.map(|ds| accuracy(h, ds)).transpose()?,
    })
}

struct TrialRun {
    records: Vec<MetricsRecord>,
    summary: TrialSummary,
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    cfg: &ExperimentConfig,
    splits: &Splits,
    objective: ObjectiveConfig,
    schedule: StepSchedule,
    stab: &StabilitySummary,
    arm: Arm,
    alpha: f64,
    trial: u64,
) -> Result<TrialRun> {
    let train = &splits.train;
    let h0 = Hypothesis::for_dataset(train);
    let rule = cfg.rule_state(h0.params().len());
    let scfg = cfg.sampler_config(alpha);
    let mut trainer = AdaptiveTrainer::new(train, scfg, schedule, rule, objective, h0)?;
    let mut rng = seeds::sampling(cfg.seed, trial);
    let factor = alpha * cfg.batch as f64 / (1.0 - cfg.lambda);
    let half = cfg.iters / 2;

    let mut records = Vec::new();
    let point = |t: u64, h: &Hypothesis, ckl: Option<f64>, usum: f64, lr: f64| -> Result<MetricsRecord> {
        let c = evaluate(h, splits, cfg.max_loss)?;
        Ok(MetricsRecord {
            arm,
            trial,
            alpha,
            t,
            train_risk: c.train_risk,
            train_loss: c.train_loss,
            train_accuracy: c.train_accuracy,
            test_risk: c.test_risk,
            test_accuracy: c.test_accuracy,
            conditional_kl: ckl,
            utility_sum_kl: usum,
            log_ratio_sum: lr,
        })
    };
    records.push(point(0, trainer.hypothesis(), None, 0.0, 0.0)?);

    let mut util_total = 0.0;
    let mut log_ratio = 0.0;
    let mut half_way_train_loss = records[0].train_loss;
    while !trainer.is_done() {
        let (t, util_before, ckl) = {
            let rec = trainer.step(&mut rng)?;
            let before = util_total;
            util_total += rec.utilities.iter().sum::<f64>();
            log_ratio += rec.log_ratio;
            (rec.t, before, rec.conditional_kl)
        };
        if t % cfg.cadence == 0 || t == cfg.iters || t == half {
            let r = point(t, trainer.hypothesis(), ckl, factor * util_before, log_ratio)?;
            if t == half {
                half_way_train_loss = r.train_loss;
            }
            if t % cfg.cadence == 0 || t == cfg.iters {
                records.push(r);
            }
        }
    }
    let (h, trace) = trainer.finish();
    let last = evaluate(&h, splits, cfg.max_loss)?;
    let utility_sum_kl = kl_bound_utility_sum(&trace)?;

    let quarter = (cfg.iters / 4) as usize;
    let ckl: Vec<f64> = trace.records.iter().filter_map(|r| r.conditional_kl).collect();
    let (first_q, last_q) = if ckl.len() == trace.records.len() && quarter >= 1 {
        (mean(&ckl[..quarter]), mean(&ckl[ckl.len() - quarter..]))
    } else {
        (None, None)
    };

    Ok(TrialRun {
        records,
        summary: TrialSummary {
            arm,
            trial,
            alpha,
            final_train_risk: last.train_risk,
            final_train_loss: last.train_loss,
            final_train_accuracy: last.train_accuracy,
            final_test_risk: last.test_risk,
            final_test_accuracy: last.test_accuracy,
            half_way_train_loss,
            target: None,
            iterations_to_target: None,
            utility_sum_kl,
            relative_utility_kl: (cfg.batch == 1)
                .then(|| kl_bound_relative_utility(&trace))
                .transpose()?,
            log_ratio_sum: trace.log_ratio_sum(),
            conditional_kl_first_quarter: first_q,
            conditional_kl_last_quarter: last_q,
            bounds: bound_reports(cfg, stab, utility_sum_kl)?,
        },
    })
}

fn arm_summary(arm: Arm, alpha: f64, runs: &[&TrialSummary]) -> ArmSummary {
    let col = |f: &dyn Fn(&TrialSummary) -> f64| runs.iter().map(|r| f(r)).collect::<Vec<_>>();
    let test: Vec<f64> = runs.iter().filter_map(|r| r.final_test_risk).collect();
    let has_target = runs.iter().any(|r| r.target.is_some());
    let itt = col(&|r| r.iterations_to_target.map_or(f64::INFINITY, |t| t as f64));
    let usum = col(&|r| r.utility_sum_kl);
    let formulas: Vec<BoundFormula> = runs
        .first()
        .map(|r| r.bounds.iter().map(|b| b.formula).collect())
        .unwrap_or_default();
    ArmSummary {
        arm,
        alpha,
        trials: runs.len(),
        median_final_train_loss: median(col(&|r| r.final_train_loss)).unwrap_or(f64::NAN),
        median_final_train_risk: median(col(&|r| r.final_train_risk)).unwrap_or(f64::NAN),
        median_final_test_risk: (test.len() == runs.len()).then(|| median(test)).flatten(),
        median_iterations_to_target: if has_target {
            median(itt).filter(|m| m.is_finite())
        } else {
            None
        },
        reached_target: runs.iter().filter(|r| r.iterations_to_target.is_some()).count(),
        median_utility_sum_kl: median(usum.clone()).unwrap_or(f64::NAN),
        mean_utility_sum_kl: mean(&usum).unwrap_or(f64::NAN),
        median_log_ratio_sum: median(col(&|r| r.log_ratio_sum)).unwrap_or(f64::NAN),
        median_bounds: formulas
            .iter()
            .enumerate()
            .map(|(k, &formula)| MedianBound {
                formula,
                value: median(col(&|r| r.bounds[k].value)).unwrap_or(f64::NAN),
            })
            .collect(),
    }
}

/// Run every `(arm, alpha)` pair for every trial. Trials run in parallel;
/// records come out ordered by arm, trial and iteration regardless.
pub fn run_experiment(cfg: &ExperimentConfig, arms: &[(Arm, f64)]) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    let objective = cfg.objective(&splits.train)?;
    let reg = cfg.regularity(&splits.train)?;
    let schedule = cfg.step_schedule(&reg);
    schedule.validate()?;
    let stab = stability_summary(cfg, &splits, &reg)?;

    let jobs: Vec<(Arm, f64, u64)> = arms
        .iter()
        .flat_map(|&(arm, alpha)| (0..cfg.trials).map(move |k| (arm, alpha, k)))
        .collect();
    let results: Vec<Result<TrialRun>> = jobs
        .par_iter()
        .map(|&(arm, alpha, k)| {
            run_trial(cfg, &splits, objective, schedule, &stab, arm, alpha, k)
                .with_context(|| format!("{} trial {k} (alpha = {alpha})", arm.name()))
        })
        .collect();

    let mut errors = Vec::new();
    let mut runs = Vec::new();
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => errors.push(format!("{e:#}")),
        }
    }

    let uniform_half: Vec<(u64, f64)> = runs
        .iter()
        .filter(|r| r.summary.arm == Arm::Uniform)
        .map(|r| (r.summary.trial, r.summary.half_way_train_loss))
        .collect();
    for run in &mut runs {
        let target = cfg.target.or_else(|| {
            uniform_half
                .iter()
                .find(|(k, _)| *k == run.summary.trial)
                .map(|(_, loss)| cfg.target_factor * loss)
        });
        run.summary.target = target;
        run.summary.iterations_to_target = target.and_then(|tgt| {
            run.records.iter().find(|r| r.train_loss <= tgt).map(|r| r.t)
        });
    }

    let summaries: Vec<ArmSummary> = arms
        .iter()
        .map(|&(arm, alpha)| {
            let mine: Vec<&TrialSummary> = runs
                .iter()
                .map(|r| &r.summary)
                .filter(|s| s.arm == arm && s.alpha == alpha)
                .collect();
            arm_summary(arm, alpha, &mine)
        })
        .collect();

    let records = runs.iter().flat_map(|r| r.records.iter().cloned()).collect();
    let report = ExperimentReport {
        complete: errors.is_empty(),
        errors,
        config: cfg.clone(),
        n_train: splits.train.len(),
        n_test: splits.test.as_ref().map(Dataset::len),
        flipped_labels: splits.flipped.len(),
        stability: stab,
        trials: runs.into_iter().map(|r| r.summary).collect(),
        arms: summaries,
    };
    Ok(ExperimentOutput { records, report })
}

/// Uniform sampling against adaptive sampling with `cfg.alpha`, sharing
/// data, initialization and sampling streams.
pub fn compare(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment(cfg, &[(Arm::Uniform, 0.0), (Arm::Adaptive, cfg.alpha)])
}
