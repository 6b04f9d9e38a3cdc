use std::path::PathBuf;
use std::process::ExitCode;

use adasamp_core::bounds::{
    gen_bound_chisq, gen_bound_derand, gen_bound_kl, gen_bound_sgd_strongly_convex, stab_convex,
    stab_nonconvex, stab_pointwise_datadep, stab_strongly_convex,
};
use adasamp_harness::data::{synth_data, write_csv, SynthSpec};
use adasamp_harness::experiment::{run_experiment, Arm, ExperimentOutput};
use adasamp_harness::numfmt::to_json_pretty;
use adasamp_harness::stability::probe_stability;
use adasamp_harness::verify::verify_sampler;
use adasamp_harness::{compare, ExperimentConfig};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "adasamp", version, about = "Adaptive-sampling SGD experiments and bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with adaptive sampling (alpha = 0 is uniform SGD).
    Train(RunArgs),
    /// Uniform against adaptive sampling on a shared configuration.
    Compare(RunArgs),
    /// Evaluate one stability coefficient or generalization bound.
    Bounds(BoundArgs),
    /// Empirical data and index-sequence stability of uniform SGD.
    ProbeStability(ProbeArgs),
    /// Write a synthetic data set as CSV.
    SynthData(SynthArgs),
    /// Chi-square and cost checks of the sampling tree.
    VerifySampler(VerifyArgs),
}

/// Experiment settings. Values from `--config` are applied first, then
/// flags on top.
#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` file using the flag names as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    /// Training CSV (`label,f1,...,fd`); synthetic data when absent.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    test_data: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    n_test: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    classes: Option<String>,
    #[arg(long)]
    imbalance: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    separation: Option<String>,
    #[arg(long)]
    spread: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    max_loss: Option<String>,
    #[arg(long)]
    domain_radius: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// `01` or `l1`.
    #[arg(long)]
    utility: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    /// Record the full conditional KL at every iteration (costs O(n) each).
    #[arg(long)]
    track_kl: bool,
    /// `constant`, `inverse-decay` or `strongly-convex`.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    /// `sgd` or `adagrad`.
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    cadence: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    /// Absolute training-loss target.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    target_factor: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("seed", &self.seed),
            ("data", &self.data),
            ("test-data", &self.test_data),
            ("n", &self.n),
            ("n-test", &self.n_test),
            ("dim", &self.dim),
            ("classes", &self.classes),
            ("imbalance", &self.imbalance),
            ("noise", &self.noise),
            ("separation", &self.separation),
            ("spread", &self.spread),
            ("mu", &self.mu),
            ("max-loss", &self.max_loss),
            ("domain-radius", &self.domain_radius),
            ("alpha", &self.alpha),
            ("lambda", &self.lambda),
            ("utility", &self.utility),
            ("batch", &self.batch),
            ("iters", &self.iters),
            ("schedule", &self.schedule),
            ("eta", &self.eta),
            ("kappa", &self.kappa),
            ("rule", &self.rule),
            ("trials", &self.trials),
            ("cadence", &self.cadence),
            ("delta", &self.delta),
            ("target", &self.target),
            ("target-factor", &self.target_factor),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).with_context(|| format!("--{key}"))?;
            }
        }
        if self.track_kl {
            cfg.track_kl = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Replace-one-example probes, and as many index-sequence probes.
    #[arg(long, default_value_t = 50)]
    perturbations: usize,
    /// Index sequences shared by both sides of every data probe.
    #[arg(long, default_value_t = 10)]
    shared_sequences: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0.0)]
    imbalance: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated tree sizes, cycled over the weight vectors.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 7, 64, 1000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    vectors: usize,
    #[arg(long, default_value_t = 100_000)]
    draws: u64,
    /// Smallest acceptable chi-square p-value.
    #[arg(long, default_value_t = 1e-3)]
    min_p: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Formula {
    StabConvex,
    StabNonconvex,
    StabPointwise,
    StabStronglyConvex,
    Chisq,
    Kl,
    SgdStronglyConvex,
    Derand,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, value_enum)]
    formula: Formula,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = adasamp_core::model::DEFAULT_MAX_LOSS)]
    max_loss: f64,
    /// KL or chi-square divergence.
    #[arg(long, default_value_t = 0.0)]
    divergence: f64,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    smooth_beta: Option<f64>,
    #[arg(long)]
    risk_h0: Option<f64>,
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    match v {
        Some(v) => Ok(v),
        None => bail!("this formula needs --{flag}"),
    }
}

fn bounds(a: &BoundArgs) -> Result<serde_json::Value> {
    let n = || need(a.n, "n");
    let t = || need(a.iters, "iters");
    let delta = || need(a.delta, "delta");
    let l = || need(a.lipschitz, "lipschitz");
    let eta = || need(a.eta, "eta");
    let beta = || need(a.beta, "beta");
    let gamma = || need(a.gamma, "gamma");
    let coefficient = |name: &str, value: f64| json!({ "formula": name, "value": value });
    Ok(match a.formula {
        Formula::StabConvex => coefficient("stab_convex", stab_convex(l()?, eta()?, t()?, n()?)?),
        Formula::StabNonconvex => coefficient(
            "stab_nonconvex",
            stab_nonconvex(l()?, need(a.smooth_beta, "smooth-beta")?, eta()?, t()?, n()?, a.max_loss)?,
        ),
        Formula::StabPointwise => coefficient(
            "stab_pointwise",
            stab_pointwise_datadep(
                l()?,
                eta()?,
                t()?,
                n()?,
                need(a.smooth_beta, "smooth-beta")?,
                need(a.risk_h0, "risk-h0")?,
            )?,
        ),
        Formula::StabStronglyConvex => {
            serde_json::to_value(stab_strongly_convex(l()?, need(a.mu, "mu")?, n()?, t()?)?)?
        }
        Formula::Chisq => {
            serde_json::to_value(gen_bound_chisq(a.divergence, a.max_loss, n()?, beta()?, delta()?)?)?
        }
        Formula::Kl => serde_json::to_value(gen_bound_kl(
            a.divergence,
            a.max_loss,
            n()?,
            t()?,
            beta()?,
            gamma()?,
            delta()?,
        )?)?,
        Formula::SgdStronglyConvex => serde_json::to_value(gen_bound_sgd_strongly_convex(
            a.divergence,
            a.max_loss,
            l()?,
            need(a.mu, "mu")?,
            n()?,
            t()?,
            delta()?,
        )?)?,
        Formula::Derand => serde_json::to_value(gen_bound_derand(
            a.divergence,
            a.max_loss,
            n()?,
            t()?,
            beta()?,
            gamma()?,
            delta()?,
        )?)?,
    })
}

fn finish_run(cfg: &ExperimentConfig, out: ExperimentOutput) -> Result<()> {
    if let Some(dir) = &cfg.out {
        out.write(dir)?;
        eprintln!("wrote {}", dir.display());
    }
    println!("{}", to_json_pretty(&out.report.arms)?);
    if !out.report.complete {
        bail!("{} trial(s) failed: {}", out.report.errors.len(), out.report.errors.join("; "));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let cfg = a.cfg.resolve()?;
            let out = run_experiment(&cfg, &[(Arm::Adaptive, cfg.alpha)])?;
            finish_run(&cfg, out)
        }
        Command::Compare(a) => {
            let cfg = a.cfg.resolve()?;
            let out = compare(&cfg)?;
            finish_run(&cfg, out)
        }
        Command::Bounds(a) => {
            println!("{}", to_json_pretty(&bounds(&a)?)?);
            Ok(())
        }
        Command::ProbeStability(a) => {
            let cfg = a.cfg.resolve()?;
            let report = probe_stability(&cfg, a.perturbations, a.shared_sequences)?;
            let text = to_json_pretty(&report)?;
            if let Some(dir) = &cfg.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("stability.json"), format!("{text}\n"))?;
            }
            println!("{text}");
            Ok(())
        }
        Command::SynthData(a) => {
            let spec = SynthSpec {
                n: a.n,
                dim: a.dim,
                classes: a.classes,
                imbalance: a.imbalance,
                noise: a.noise,
                separation: a.separation,
                spread: a.spread,
            };
            let set = synth_data(&spec, a.seed)?;
            write_csv(&a.out, &set.data)?;
            eprintln!(
                "wrote {} examples ({} flipped) to {}",
                set.data.len(),
                set.flipped.len(),
                a.out.display()
            );
            Ok(())
        }
        Command::VerifySampler(a) => {
            if a.sizes.is_empty() {
                bail!("--sizes must name at least one size");
            }
            let checks = verify_sampler(a.seed, &a.sizes, a.vectors, a.draws)?;
            println!("{}", to_json_pretty(&checks)?);
            let bad: Vec<_> = checks
                .iter()
                .filter(|c| c.p_value <= a.min_p || c.max_prob_error > 1e-12)
                .collect();
            if !bad.is_empty() {
                bail!("{} of {} sampler checks failed", bad.len(), checks.len());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
