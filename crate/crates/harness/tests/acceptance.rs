//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Every expected value is computed here, independently of
//! the code under test.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use adasamp_core::adaptive::reweighted_distribution;
use adasamp_core::bounds::{
    chisq_divergence, enumerate_exact, gen_bound_chisq, gen_bound_derand, gen_bound_kl,
    gen_bound_sgd_strongly_convex, kl_bound_utility_sum, kl_divergence, monte_carlo_statistics,
    stab_convex, stab_nonconvex, stab_pointwise_datadep, stab_strongly_convex,
};
use adasamp_core::model::{objective_grad, objective_value, regularity_constants};
use adasamp_core::{
    train, Dataset, Example, Hypothesis, ObjectiveConfig, SamplerConfig, StepSchedule,
    UpdateRuleState, UtilityKind, WeightTree,
};
use adasamp_harness::experiment::{load_splits, run_experiment, Arm};
use adasamp_harness::stability::probe_stability;
use adasamp_harness::ExperimentConfig;
use anyhow::Result;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn run(id: u32, name: &str, limit: Duration, f: impl FnOnce() -> Result<Outcome>) -> bool {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e:#}")),
    };
    let in_time = elapsed <= limit;
    let ok = pass && in_time;
    let timing = if in_time {
        format!("{:.1}s", elapsed.as_secs_f64())
    } else {
        format!("{:.1}s, over the {}s limit", elapsed.as_secs_f64(), limit.as_secs())
    };
    println!(
        "{} criterion {id:>2} {name} [{timing}]: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

fn uniform01(rng: &mut dyn RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sampler_correctness() -> Result<Outcome> {
    let sizes = [2usize, 7, 64, 1000];
    let draws = 100_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_err, mut min_p) = (0.0f64, 1.0f64);
    for k in 0..50 {
        let n = sizes[k % sizes.len()];
        let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let mut tree = WeightTree::new(&w)?;
        // exercise incremental labels before checking
        for _ in 0..2 * n {
            let i = rng.random_range(0..n);
            w[i] = rng.random_range(0.05..1.0);
            tree.update(i, w[i])?;
        }
        let total: f64 = w.iter().sum();
        let mut counts = vec![0u64; n];
        for (i, wi) in w.iter().enumerate() {
            worst_err = worst_err.max((tree.prob(i)? - wi / total).abs());
        }
        for _ in 0..draws {
            counts[tree.sample(&mut rng)?] += 1;
        }
        let stat: f64 = counts
            .iter()
            .zip(&w)
            .map(|(&c, wi)| {
                let e = wi / total * draws as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let p = ChiSquared::new((n - 1) as f64)?.sf(stat);
        min_p = min_p.min(p);
    }
    outcome(
        worst_err <= 1e-12 && min_p > 1e-3,
        format!("50 vectors, max |tree - naive| = {worst_err:.2e}, min chi-square p = {min_p:.4}"),
    )
}

fn sampler_complexity() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut notes = Vec::new();
    let mut pass = true;
    for n in [1usize, 2, 3, 1000, 65_536, 65_537, 1_000_000] {
        let mut depth = 0u64;
        while (1usize << depth) < n {
            depth += 1;
        }
        let mut tree = WeightTree::uniform(n)?;
        tree.reset_node_touches();
        let k = 1000u64;
        for _ in 0..k {
            tree.sample(&mut rng)?;
        }
        let per_draw = tree.node_touches() as f64 / k as f64;
        tree.reset_node_touches();
        for _ in 0..k {
            let i = rng.random_range(0..n);
            tree.update(i, rng.random_range(0.5..2.0))?;
        }
        let per_update = tree.node_touches() as f64 / k as f64;
        pass &= per_draw == depth as f64 && per_update == (depth + 1) as f64;
        notes.push(format!("n={n}: {per_draw}/{per_update} (depth {depth})"));
    }
    outcome(pass, format!("touches per draw/update: {}", notes.join(", ")))
}

fn random_example(rng: &mut ChaCha8Rng, dim: usize, classes: usize) -> Example {
    let x = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    Example::new(x, rng.random_range(0..classes))
}

fn random_hypothesis(rng: &mut ChaCha8Rng, classes: usize, dim: usize, scale: f64) -> Hypothesis {
    let p = (0..classes * dim).map(|_| rng.random_range(-scale..scale)).collect();
    Hypothesis::from_params(classes, dim, p).unwrap()
}

fn gradient_and_regularity() -> Result<Outcome> {
    let (classes, dim) = (3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let examples: Vec<Example> = (0..50).map(|_| random_example(&mut rng, dim, classes)).collect();
    let data = Dataset::with_classes(examples, classes)?;
    let mut worst_fd = 0.0f64;
    for _ in 0..100 {
        let mu = rng.random_range(0.0..1.0);
        let h = random_hypothesis(&mut rng, classes, dim, 2.0);
        let z = &data.examples()[rng.random_range(0..data.len())];
        let g = objective_grad(&h, z, mu)?;
        let step = 1e-6;
        let fd: Vec<f64> = (0..g.len())
            .map(|j| {
                let (mut hp, mut hm) = (h.clone(), h.clone());
                hp.params_mut()[j] += step;
                hm.params_mut()[j] -= step;
                (objective_value(&hp, z, mu).unwrap() - objective_value(&hm, z, mu).unwrap())
                    / (2.0 * step)
            })
            .collect();
        let diff: Vec<f64> = fd.iter().zip(&g).map(|(a, b)| a - b).collect();
        worst_fd = worst_fd.max(norm(&diff) / norm(&g).max(1e-12));
    }

    let (mut worst_convex, mut worst_smooth) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..100 {
        let mu = rng.random_range(0.0..1.0);
        let reg = regularity_constants(&data, mu, 5.0, Some(10.0))?;
        let h = random_hypothesis(&mut rng, classes, dim, 2.0);
        let h2 = random_hypothesis(&mut rng, classes, dim, 2.0);
        let z = &data.examples()[rng.random_range(0..data.len())];
        let d: Vec<f64> = h2.params().iter().zip(h.params()).map(|(a, b)| a - b).collect();
        let g = objective_grad(&h, z, mu)?;
        let g2 = objective_grad(&h2, z, mu)?;
        let lhs = objective_value(&h2, z, mu)? - objective_value(&h, z, mu)?;
        let rhs = g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>()
            + 0.5 * mu * norm(&d).powi(2);
        worst_convex = worst_convex.max(rhs - lhs);
        let gd: Vec<f64> = g2.iter().zip(&g).map(|(a, b)| a - b).collect();
        worst_smooth = worst_smooth.max(norm(&gd) - reg.smooth_beta * norm(&d));
    }
    outcome(
        worst_fd < 1e-5 && worst_convex <= 1e-9 && worst_smooth <= 1e-9,
        format!(
            "max finite-difference rel err {worst_fd:.2e}; max strong-convexity violation {worst_convex:.2e}; max smoothness violation {worst_smooth:.2e}"
        ),
    )
}

/// `sum q U - KL(q || q_ref^lambda normalized) / alpha`, written out here.
fn reweighting_value(q: &[f64], u: &[f64], q_ref: &[f64], alpha: f64, lambda: f64) -> f64 {
    let t: Vec<f64> = q_ref.iter().map(|v| v.powf(lambda)).collect();
    let s: f64 = t.iter().sum();
    let mut kl = 0.0;
    for (qi, ti) in q.iter().zip(&t) {
        if *qi > 0.0 {
            kl += qi * (qi / (ti / s)).ln();
        }
    }
    q.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() - kl / alpha
}

fn reweighting_optimality() -> Result<Outcome> {
    let k = 140;
    let mut grid = Vec::new();
    for a in 0..=k {
        for b in 0..=(k - a) {
            let (x, y) = (a as f64 / k as f64, b as f64 / k as f64);
            grid.push([x, y, (1.0 - x - y).max(0.0)]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::INFINITY;
    for _ in 0..20 {
        let u: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let q_ref: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let alpha = rng.random_range(0.1..5.0);
        let lambda = rng.random_range(0.05..0.95);
        let best = reweighted_distribution(&q_ref, &u, alpha, lambda)?;
        let best_val = reweighting_value(&best, &u, &q_ref, alpha, lambda);
        let grid_max = grid
            .iter()
            .map(|q| reweighting_value(q, &u, &q_ref, alpha, lambda))
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.min(best_val - grid_max);
    }
    outcome(
        worst >= -1e-9,
        format!("{} grid points, 20 settings, min margin {worst:.3e}", grid.len()),
    )
}

fn tiny_instance(rng: &mut ChaCha8Rng) -> Result<(Dataset, SamplerConfig, StepSchedule, ObjectiveConfig)> {
    let n = rng.random_range(2..=4);
    let examples = (0..n)
        .map(|i| {
            let x = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            Example::new(x, if i < 2 { i } else { rng.random_range(0..2) })
        })
        .collect();
    let cfg = SamplerConfig {
        amplitude: rng.random_range(0.0..3.0),
        decay: rng.random_range(0.05..0.95),
        utility: if rng.random_bool(0.5) { UtilityKind::L1 } else { UtilityKind::ZeroOne },
        batch_size: 1,
        iterations: rng.random_range(1..=5),
        track_full_conditional_kl: false,
    };
    let sched = StepSchedule::InverseDecay {
        eta: rng.random_range(0.1..2.0),
        kappa: rng.random_range(0.0..0.5),
    };
    let obj = ObjectiveConfig {
        mu: rng.random_range(0.0..0.2),
        max_loss: 5.0,
        domain_radius: None,
    };
    Ok((Dataset::with_classes(examples, 2)?, cfg, sched, obj))
}

fn kl_oracle() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_rel, mut worst_sum) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut mc_checks, mut mc_misses, mut worst_sigma) = (0, 0, 0.0f64);
    for _ in 0..50 {
        let (data, cfg, sched, obj) = tiny_instance(&mut rng)?;
        let h0 = Hypothesis::for_dataset(&data);
        let exact = enumerate_exact(&data, cfg, sched, UpdateRuleState::sgd(), obj, h0.clone())?;
        worst_rel = worst_rel.max(exact.kl - exact.relative_utility_bound);
        worst_sum = worst_sum.max(exact.kl - exact.utility_sum_bound);
        let mc = monte_carlo_statistics(
            &data,
            cfg,
            sched,
            &UpdateRuleState::sgd(),
            obj,
            &h0,
            0..10_000,
            ChaCha8Rng::seed_from_u64,
        )?;
        let rel = mc.relative_utility_bound.expect("single-draw batches");
        for (est, target) in [
            (mc.kl, exact.kl),
            (rel, exact.relative_utility_bound),
            (mc.utility_sum_bound, exact.utility_sum_bound),
        ] {
            mc_checks += 1;
            if est.std_err > 0.0 {
                worst_sigma = worst_sigma.max((est.mean - target).abs() / est.std_err);
            }
            if !est.agrees_with(target, 3.0) {
                mc_misses += 1;
            }
        }
    }
    outcome(
        worst_rel <= 1e-9 && worst_sum <= 1e-9 && mc_misses == 0,
        format!(
            "50 instances; max KL - relative-utility statistic {worst_rel:.3e}, max KL - utility-sum statistic {worst_sum:.3e}; Monte Carlo outside 3 SE: {mc_misses}/{mc_checks} (largest deviation {worst_sigma:.2} SE)"
        ),
    )
}

/// Uniform index from live-leaf counts of the padded tree, one uniform per
/// level; the draw a uniform tree makes.
fn uniform_walk(rng: &mut dyn RngCore, n: usize) -> usize {
    let cap = n.next_power_of_two();
    let live = |lo: usize, hi: usize| hi.min(n).saturating_sub(lo) as f64;
    let (mut lo, mut hi) = (0, cap);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let (l, r) = (live(lo, mid), live(mid, hi));
        if uniform01(rng) * (l + r) < l {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

fn uniform_reduction() -> Result<Outcome> {
    let mut all_equal = true;
    let mut all_zero = true;
    for seed in 0..10u64 {
        let mut meta = ChaCha8Rng::seed_from_u64(600 + seed);
        let n = 50 + 37 * seed as usize;
        let examples: Vec<Example> = (0..n).map(|_| random_example(&mut meta, 3, 2)).collect();
        let data = Dataset::with_classes(examples, 2)?;
        let cfg = SamplerConfig {
            amplitude: 0.0,
            decay: 0.5,
            utility: UtilityKind::L1,
            batch_size: 5,
            iterations: 200,
            track_full_conditional_kl: false,
        };
        let (_, trace) = train(
            &data,
            cfg,
            StepSchedule::InverseDecay { eta: 0.2, kappa: 0.01 },
            UpdateRuleState::sgd(),
            ObjectiveConfig { mu: 0.01, max_loss: 5.0, domain_radius: None },
            Hypothesis::for_dataset(&data),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let expected: Vec<usize> = (0..1000).map(|_| uniform_walk(&mut rng, n)).collect();
        all_equal &= trace.index_stream().collect::<Vec<_>>() == expected;
        all_zero &= trace.log_ratio_sum() == 0.0 && kl_bound_utility_sum(&trace)? == 0.0;
    }
    outcome(
        all_equal && all_zero,
        format!("10 seeds: index streams identical = {all_equal}, log-ratio sum and utility-sum statistic exactly 0 = {all_zero}"),
    )
}

fn stability_probe() -> Result<Outcome> {
    let cfg = ExperimentConfig {
        mu: 0.1,
        n: 500,
        iters: 500,
        ..Default::default()
    };
    let splits = load_splits(&cfg)?;
    let obj = cfg.objective(&splits.train)?;
    let l = regularity_constants(&splits.train, obj.mu, obj.max_loss, obj.domain_radius)?.lipschitz;
    let beta_bound = 2.0 * l * l / (0.1 * 500.0);
    let gamma_bound = 2.0 * l * l / (0.1 * 500.0);
    let at_t = probe_stability(&cfg, 50, 10)?;
    let at_2t = probe_stability(&ExperimentConfig { iters: 1000, ..cfg }, 50, 10)?;
    let pass = at_t.data_probes.iter().all(|&b| b <= beta_bound)
        && at_t.hyper_probes.iter().all(|&g| g <= gamma_bound)
        && at_2t.gamma_median < at_t.gamma_median;
    outcome(
        pass,
        format!(
            "L = {l:.4}; max data probe {:.3e} <= {beta_bound:.3e}; max index probe {:.3e} <= {gamma_bound:.3e}; median index probe T=500 {:.3e} -> T=1000 {:.3e}",
            at_t.beta_empirical, at_t.gamma_empirical, at_t.gamma_median, at_2t.gamma_median
        ),
    )
}

fn bound_cross_checks() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let kl = rng.random_range(0.0..50.0);
        let m = rng.random_range(0.5..10.0);
        let l = rng.random_range(0.1..5.0);
        let mu = rng.random_range(0.01..2.0);
        let n = rng.random_range(10..100_000u64);
        let t = rng.random_range(1..100_000u64);
        let delta = rng.random_range(0.001..0.5);
        let corollary = gen_bound_sgd_strongly_convex(kl, m, l, mu, n, t, delta)?.value;
        let coeff = stab_strongly_convex(l, mu, n, t)?;
        let composed = gen_bound_kl(kl, m, n, t, coeff.beta_data, coeff.gamma_hyper.unwrap(), delta)?.value;
        worst = worst.max((corollary - composed).abs() / composed);
    }

    // (name, computed, hand expression)
    let ln = f64::ln;
    let hand = [
        ("convex stability", stab_convex(1.0, 0.1, 1, 100)?, 2.0 * 0.1 * (0.0 + 1.0) / 100.0),
        ("non-convex stability", stab_nonconvex(1.0, 1.0, 1.0, 100, 101, 1.0)?, 2.0 / 100.0 * 2f64.sqrt() * 10.0),
        ("pointwise stability", stab_pointwise_datadep(1.0, 0.1, 1, 100, 2.0, 1.0)?, 0.002 * 4f64.sqrt()),
        ("strongly convex beta", stab_strongly_convex(1.0, 0.1, 1000, 1000)?.beta_data, 2.0 / (0.1 * 1000.0)),
        ("strongly convex gamma", stab_strongly_convex(1.0, 0.1, 1000, 1000)?.gamma_hyper.unwrap(), 2.0 / (0.1 * 1000.0)),
        ("chi-square bound", gen_bound_chisq(0.0, 1.0, 100, 0.0, 0.1)?.value, (10.0f64 * 0.02).sqrt()),
        ("KL bound", gen_bound_kl(0.0, 1.0, 100, 100, 0.0, 0.0, 0.05)?.value, (2.0 * ln(40.0) / 100.0).sqrt()),
        ("KL bound at ln(2/delta) = 2", gen_bound_kl(0.0, 3.0, 100, 100, 0.0, 0.0, 2.0 / 2f64.exp())?.value, (4.0f64 * 9.0 / 100.0).sqrt()),
        ("strongly convex SGD bound", gen_bound_sgd_strongly_convex(0.0, 1.0, 1.0, 1.0, 100, 100, 0.05)?.value, 0.02 + (2.0 * ln(40.0) * (25.0 / 100.0 + 16.0 / 100.0)).sqrt()),
        ("derandomized bound", gen_bound_derand(0.0, 1.0, 100, 100, 0.0, 0.0, 0.05)?.value, (2.0 * ln(80.0) / 100.0).sqrt()),
        ("KL divergence", kl_divergence(&[0.5, 0.5], &[0.25, 0.75])?, 0.5 * ln(2.0) + 0.5 * ln(2.0 / 3.0)),
        ("chi-square divergence", chisq_divergence(&[0.5, 0.5], &[0.25, 0.75])?, 1.0 / 3.0),
    ];
    let sig5 = |v: f64| format!("{v:.4e}");
    let misses: Vec<&str> = hand
        .iter()
        .filter(|(_, got, want)| sig5(*got) != sig5(*want))
        .map(|(name, _, _)| *name)
        .collect();
    // Quoted decimals that disagree with their own expression.
    let quoted = [("KL bound", 0.27163, hand[6].2), ("derandomized bound", 0.29607, hand[9].2)];
    let notes: Vec<String> = quoted
        .iter()
        .filter(|(_, q, v)| sig5(*q) != sig5(*v))
        .map(|(name, q, v)| format!("{name} quoted as {q} but its expression gives {v:.6}"))
        .collect();
    outcome(
        worst <= 1e-12 && misses.is_empty(),
        format!(
            "strongly convex SGD bound vs KL bound with strongly convex coefficients: max rel diff {worst:.1e} over 20 tuples; {}/{} hand values agree to 5 significant digits{}{}",
            hand.len() - misses.len(),
            hand.len(),
            if misses.is_empty() { String::new() } else { format!(" (mismatch: {})", misses.join(", ")) },
            if notes.is_empty() { String::new() } else { format!("; note: {}", notes.join("; ")) },
        ),
    )
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 }
}

fn desk_scale(jsonl: &mut Vec<String>) -> Result<Outcome> {
    let cfg = ExperimentConfig {
        trials: 10,
        track_kl: true,
        ..Default::default()
    };
    assert_eq!((cfg.n, cfg.iters, cfg.batch), (2000, 4000, 100));
    let alpha = cfg.alpha;
    let sweep = [0.0, alpha, 4.0 * alpha];
    let out = run_experiment(
        &cfg,
        &[(Arm::Uniform, 0.0), (Arm::Adaptive, sweep[1]), (Arm::Adaptive, sweep[2])],
    )?;
    jsonl.push(out.jsonl()?);
    let trials = |arm: Arm, a: f64| out.report.trials.iter().filter(move |t| t.arm == arm && t.alpha == a);

    let itt = |arm: Arm, a: f64| {
        let mut v: Vec<f64> = trials(arm, a)
            .map(|t| t.iterations_to_target.map_or(f64::INFINITY, |k| k as f64))
            .collect();
        median(&mut v)
    };
    let (u_itt, a_itt) = (itt(Arm::Uniform, 0.0), itt(Arm::Adaptive, alpha));
    let faster = a_itt < u_itt;

    let kl_stat: Vec<f64> = [(Arm::Uniform, sweep[0]), (Arm::Adaptive, sweep[1]), (Arm::Adaptive, sweep[2])]
        .iter()
        .map(|&(arm, a)| median(&mut trials(arm, a).map(|t| t.utility_sum_kl).collect::<Vec<_>>()))
        .collect();
    let monotone = kl_stat.windows(2).all(|w| w[0] <= w[1]);

    let adaptive: Vec<_> = trials(Arm::Adaptive, alpha).collect();
    let rises = out
        .records
        .iter()
        .filter(|r| r.arm == Arm::Adaptive && r.alpha == alpha && r.t == cfg.cadence)
        .all(|r| r.conditional_kl.unwrap_or(0.0) > 0.0);
    let mut first: Vec<f64> = adaptive.iter().map(|t| t.conditional_kl_first_quarter.unwrap()).collect();
    let mut last: Vec<f64> = adaptive.iter().map(|t| t.conditional_kl_last_quarter.unwrap()).collect();
    let decays_in = adaptive
        .iter()
        .filter(|t| t.conditional_kl_last_quarter < t.conditional_kl_first_quarter)
        .count();
    let (first_med, last_med) = (median(&mut first), median(&mut last));
    let decays = rises && last_med < first_med;

    outcome(
        faster && monotone && decays && out.report.complete,
        format!(
            "(a) median iterations to target: uniform {u_itt}, adaptive {a_itt}; (b) median utility-sum statistic for alpha {:?}: {:?}; (c) conditional KL positive after the first tick = {rises}, median first-quarter mean {first_med:.3e} -> last-quarter mean {last_med:.3e}, lower in {decays_in}/{} trials",
            sweep,
            kl_stat.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>(),
            adaptive.len(),
        ),
    )
}

fn determinism(first: &[String]) -> Result<Outcome> {
    let Some(first) = first.first() else {
        return outcome(false, "criterion 9 did not produce a run to compare".into());
    };
    let cfg = ExperimentConfig {
        trials: 10,
        track_kl: true,
        ..Default::default()
    };
    let a = cfg.alpha;
    let out = run_experiment(&cfg, &[(Arm::Uniform, 0.0), (Arm::Adaptive, a), (Arm::Adaptive, 4.0 * a)])?;
    let second = out.jsonl()?;
    outcome(
        *first == second,
        format!("{} bytes, identical = {}", second.len(), *first == second),
    )
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= run(1, "sampler correctness", secs(30), sampler_correctness);
    ok &= run(2, "sampler complexity", secs(60), sampler_complexity);
    ok &= run(3, "gradient and regularity", secs(10), gradient_and_regularity);
    ok &= run(4, "reweighting optimality", secs(30), reweighting_optimality);
    ok &= run(5, "KL oracle", secs(300), kl_oracle);
    ok &= run(6, "uniform reduction", secs(60), uniform_reduction);
    ok &= run(7, "stability probe", secs(600), stability_probe);
    ok &= run(8, "bound cross-checks", secs(10), bound_cross_checks);
    let mut jsonl = Vec::new();
    ok &= run(9, "desk-scale comparison", secs(900), || desk_scale(&mut jsonl));
    ok &= run(10, "determinism", secs(900), || determinism(&jsonl));
    if ok {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria failed");
        ExitCode::FAILURE
    }
}
