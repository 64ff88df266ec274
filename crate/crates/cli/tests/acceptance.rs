//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless of the outcome unless `PRESCRIPTOR_ACCEPTANCE_STRICT=1`,
//! so that `cargo test` reports the lines without hiding the other suites.
//! `PRESCRIPTOR_ACCEPTANCE_ONLY=3,6` runs a subset.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use prescriptor::clustering::{fit, KMeansConfig};
use prescriptor::encoding::{encode_log, fit_stats};
use prescriptor::evaluation::{optimal_trace_analysis, prefix_gain_analysis};
use prescriptor::mdp::{build, validate, BuildOptions, Mdp, State};
use prescriptor::rl::{mc_policy_iteration, q_learning, scaled_q, ScalingFn, ScalingSpec, TrainConfig};
use prescriptor::simgen::{generate_log, ProcessModel};
use prescriptor_cli::commands::{cmd_eval_log, cmd_eval_sim, cmd_generate, cmd_train, load_log};
use prescriptor_cli::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Criterion 1: exact agreement with the enumeration oracle.
const ORACLE_PROB_TOL: f64 = 1e-12;
const ORACLE_REWARD_TOL: f64 = 1e-9;
const ORACLE_SECONDS: f64 = 10.0;
/// Criterion 2.
const NORMALIZATION_TOL: f64 = 1e-9;
/// Criterion 3.
const OPTIMALITY_SECONDS: f64 = 120.0;
/// Criterion 5.
const OVERFIT_SECONDS: f64 = 1.0;
/// Criterion 6: policy mean minus log mean, in standard errors.
const SIM_MARGIN_SE: f64 = 3.0;
const SIM_SECONDS: f64 = 900.0;
/// Criterion 7: ±5 percentage points.
const ACCEPTANCE_BAND: f64 = 0.05;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn check(cond: bool, ok: impl Into<String>, err: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(err.into())
    }
}

fn probability_violations(mdp: &Mdp) -> Vec<String> {
    let mut bad = Vec::new();
    for s in mdp.states() {
        for (a, n) in mdp.actions_at(s) {
            if n == 0 {
                continue;
            }
            let sum: f64 = mdp
                .outgoing(s)
                .iter()
                .filter(|e| e.action == a)
                .map(|e| e.probability)
                .sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                bad.push(format!("{s} {a}: {sum}"));
            }
        }
    }
    bad
}

fn mini_log_mdps() -> Vec<(usize, Mdp, support::OracleMdp)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..200)
        .map(|round| {
            let log = support::random_mini_log(&mut rng);
            let stats = fit_stats(&log).unwrap();
            let vectors = encode_log(&log, &stats).unwrap();
            let mut distinct: Vec<Vec<u64>> = vectors
                .iter()
                .map(|v| v.as_slice().iter().map(|x| x.to_bits()).collect())
                .collect();
            distinct.sort();
            distinct.dedup();
            let k = rng.random_range(1..=3).min(distinct.len());
            let cfg = KMeansConfig {
                k,
                seed: round as u64,
                ..KMeansConfig::default()
            };
            let km = fit(&vectors, &cfg).unwrap();
            let mdp = build(&log, &km, &stats, &BuildOptions::default()).unwrap();
            let oracle = support::oracle_mdp(&log, &km);
            (round, mdp, oracle)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut failures = Vec::new();
    for (round, mdp, oracle) in mini_log_mdps() {
        let states: std::collections::BTreeSet<String> = mdp.states().iter().map(|s| s.key()).collect();
        if states != oracle.states || mdp.edges().len() != oracle.edges.len() {
            failures.push(format!("round {round}: state or edge sets differ"));
            continue;
        }
        for e in mdp.edges() {
            let key = (e.source.key(), e.action.clone(), e.target.key());
            match oracle.edges.get(&key) {
                Some(&(n, p, r))
                    if e.count == n
                        && (e.probability - p).abs() <= ORACLE_PROB_TOL
                        && (e.reward - r).abs() <= ORACLE_REWARD_TOL => {}
                _ => failures.push(format!("round {round}: edge {key:?}")),
            }
        }
        let ends: BTreeMap<String, u64> = mdp.terminations().iter().map(|(s, n)| (s.key(), *n)).collect();
        if ends != oracle.terminations {
            failures.push(format!("round {round}: terminations differ"));
        }
        if !validate(&mdp).is_ok() {
            failures.push(format!("round {round}: validation failed"));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        failures.is_empty() && secs < ORACLE_SECONDS,
        format!("200 mini-logs match the oracle in {secs:.2} s"),
        format!(
            "{} mismatches, {secs:.2} s; first: {:?}",
            failures.len(),
            failures.first()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut mdps: Vec<Mdp> = mini_log_mdps().into_iter().map(|(_, m, _)| m).collect();
    mdps.extend(support::oracle_mdps());
    mdps.push(support::overfit_mdp());
    for preset in ["common_small", "rare_small"] {
        let fx = support::Fixture::new(preset, 1000, 30, 1000, 3);
        mdps.push(fx.mined.mdp);
    }
    let bad: Vec<String> = mdps.iter().flat_map(probability_violations).collect();
    check(
        bad.is_empty(),
        format!("{} MDPs normalized within {NORMALIZATION_TOL:e}", mdps.len()),
        format!("{} violations; first: {:?}", bad.len(), bad.first()),
    )
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let mdps = support::oracle_mdps();
    let results: Vec<(usize, usize, usize)> = mdps
        .par_iter()
        .enumerate()
        .map(|(i, mdp)| {
            let vi = support::value_iteration(mdp, mdp.gamma());
            let cfg = support::oracle_train_config(i as u64);
            let (mc, _) = mc_policy_iteration(mdp, &ScalingFn::H0, &cfg).unwrap();
            let (ql, _) = q_learning(mdp, &cfg).unwrap();
            (
                i,
                support::policy_mismatches(mdp, &vi, &mc).len(),
                support::policy_mismatches(mdp, &vi, &ql).len(),
            )
        })
        .collect();
    let secs = started.elapsed().as_secs_f64();
    let mc_bad = results.iter().filter(|r| r.1 > 0).count();
    let ql_bad = results.iter().filter(|r| r.2 > 0).count();
    let detail = format!(
        "{mc_bad}/50 MDPs with a non-optimal Monte Carlo action, {ql_bad}/50 with a non-optimal Q-learning action, {secs:.1} s"
    );
    check(
        mc_bad == 0 && ql_bad == 0 && secs < OPTIMALITY_SECONDS,
        detail.clone(),
        detail,
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let step = ScalingFn::Step { n_t: 50 };
    for _ in 0..1000 {
        let q: f64 = rng.random_range(-1e6..1e6);
        let n: u64 = rng.random_range(0..500);
        if scaled_q(q, &ScalingFn::H0, n).to_bits() != q.to_bits() {
            return Err(format!("H0 changed q {q} at n {n}"));
        }
        let s = scaled_q(q, &step, n);
        if (n <= 50) != (s == 0.0) || (n > 50 && s != q) {
            return Err(format!("step(50) gives {s} for q {q}, n {n}"));
        }
    }
    for lambda in [1.0, 50.0, 1000.0] {
        let h = ScalingFn::Smooth { lambda };
        if h.h_value(0) != 0.0 {
            return Err(format!("smooth({lambda})(0) = {}", h.h_value(0)));
        }
        for _ in 0..1000 {
            let a: u64 = rng.random_range(0..100_000);
            let b: u64 = rng.random_range(0..100_000);
            let (lo, hi) = (a.min(b), a.max(b));
            if h.h_value(lo) > h.h_value(hi) {
                return Err(format!("smooth({lambda}) decreases between {lo} and {hi}"));
            }
        }
    }
    Ok("H0 exact, step(50) cuts at n <= 50, smooth monotone for λ in {1, 50, 1000}".into())
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let mdp = support::overfit_mdp();
    let cfg = TrainConfig {
        episodes: 5000,
        seed: 1,
        ..TrainConfig::default()
    };
    let choice = |spec: ScalingSpec| {
        let h = spec.fit(&mdp);
        let first = mc_policy_iteration(&mdp, &h, &cfg).unwrap().0;
        let again = mc_policy_iteration(&mdp, &h, &cfg).unwrap().0;
        (
            h.name(),
            first.action(&State::Start).map(str::to_string),
            first == again,
        )
    };
    let picks = [
        choice(ScalingSpec::H0),
        choice(ScalingSpec::Linear),
        choice(ScalingSpec::Step { n_t: 50 }),
        choice(ScalingSpec::Smooth { lambda: 50.0 }),
    ];
    let secs = started.elapsed().as_secs_f64();
    let expected = ["b", "a", "a", "a"];
    let ok = picks
        .iter()
        .zip(expected)
        .all(|(p, e)| p.1.as_deref() == Some(e) && p.2)
        && secs < OVERFIT_SECONDS;
    let summary: Vec<String> = picks
        .iter()
        .map(|(n, a, det)| {
            format!(
                "{n}={}{}",
                a.as_deref().unwrap_or("-"),
                if *det { "" } else { " (nondeterministic)" }
            )
        })
        .collect();
    check(
        ok,
        format!("{} in {secs:.3} s", summary.join(" ")),
        format!("{} in {secs:.3} s", summary.join(" ")),
    )
}

fn write_config(dir: &Path, json: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "model": { "preset": "common_small" },
            "generate": { "n_traces": 2000, "seed": 42 },
            "sim": { "n_traces": 5000, "seed": 7 }
        }"#,
    );
    let ctx = Context::new(Some(&cfg), None, None, None).map_err(|e| e.to_string())?;
    cmd_generate(&ctx, None).map_err(|e| e.to_string())?;
    cmd_train(&ctx).map_err(|e| e.to_string())?;
    let report = cmd_eval_sim(&ctx).map_err(|e| e.to_string())?;
    let rewards: Vec<f64> = load_log(&ctx)
        .map_err(|e| e.to_string())?
        .traces()
        .iter()
        .map(|t| t.reward)
        .collect();
    let (log_mean, log_var) = mean_var(&rewards);
    let mut lines = Vec::new();
    let mut ok = true;
    for e in report.entries.iter().filter(|e| e.name != "default") {
        let se = (e.std_reward.powi(2) / e.n_traces as f64 + log_var / rewards.len() as f64).sqrt();
        let z = (e.mean_reward - log_mean) / se;
        ok &= z >= SIM_MARGIN_SE;
        lines.push(format!("{} {:.1} ({z:.1} SE)", e.name, e.mean_reward));
    }
    let secs = started.elapsed().as_secs_f64();
    ok &= report.entries.len() == 5 && secs < SIM_SECONDS;
    let detail = format!("log mean {log_mean:.1}; {}; {secs:.1} s", lines.join(", "));
    check(ok, detail.clone(), detail)
}

fn criterion_7() -> Outcome {
    let targets = [
        ("common_small", 0.23, 0.24),
        ("common_big", 0.23, 0.24),
        ("rare_small", 0.16, 0.16),
        ("rare_big", 0.16, 0.16),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, lo, hi) in targets {
        let model = ProcessModel::preset(name).unwrap();
        let log = generate_log(&model, 10_000, 11).unwrap();
        let accept = &model.kpi.accept_activity;
        let rate = log
            .traces()
            .iter()
            .filter(|t| t.activities().any(|a| a == accept))
            .count() as f64
            / 10_000.0;
        ok &= rate >= lo - ACCEPTANCE_BAND && rate <= hi + ACCEPTANCE_BAND;
        lines.push(format!("{name} {:.1}%", 100.0 * rate));
    }
    check(ok, lines.join(", "), lines.join(", "))
}

fn criterion_8() -> Outcome {
    let fx = support::Fixture::new("common_small", 1500, 30, 20_000, 5);
    let mut lines = Vec::new();
    for (i, (name, _, _)) in fx.policies.iter().enumerate() {
        let rec = fx.recommender(i);
        let opt = optimal_trace_analysis(&fx.test, name, &rec);
        let gain = prefix_gain_analysis(&fx.test, name, &rec);
        let same = gain.pooled_full_length.count == opt.compliant.count
            && gain.pooled_full_length.mean.map(f64::to_bits) == opt.compliant.mean.map(f64::to_bits);
        if !same || opt.compliant.count == 0 {
            return Err(format!("{name}: {:?} vs {:?}", gain.pooled_full_length, opt.compliant));
        }
        lines.push(format!("{name} n={}", opt.compliant.count));
    }
    Ok(format!("identical compliant means ({})", lines.join(", ")))
}

fn pipeline_run(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let cfg = write_config(
        dir,
        r#"{
            "generate": { "n_traces": 1000, "seed": 3 },
            "k": 40,
            "train": { "episodes": 20000, "seed": 3 },
            "q_learning": true,
            "sim": { "n_traces": 1000, "seed": 3 }
        }"#,
    );
    let ctx = Context::new(Some(&cfg), None, None, None).map_err(|e| e.to_string())?;
    cmd_generate(&ctx, None).map_err(|e| e.to_string())?;
    cmd_train(&ctx).map_err(|e| e.to_string())?;
    cmd_eval_sim(&ctx).map_err(|e| e.to_string())?;
    cmd_eval_log(&ctx).map_err(|e| e.to_string())?;
    let mut files = BTreeMap::new();
    for sub in ["artifacts", "reports"] {
        for entry in std::fs::read_dir(dir.join(sub)).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            let name = format!("{sub}/{}", path.file_name().unwrap().to_string_lossy());
            files.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
        }
    }
    Ok(files)
}

fn criterion_9() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline_run(a.path())?;
    let second = pipeline_run(b.path())?;
    let policies = first.keys().filter(|k| k.contains("policy_")).count();
    let reports = first.keys().filter(|k| k.starts_with("reports/")).count();
    if first.keys().ne(second.keys()) {
        return Err("runs wrote different file sets".into());
    }
    let differing: Vec<&String> = first.keys().filter(|k| first[*k] != second[*k]).collect();
    check(
        differing.is_empty() && policies == 5 && reports > 0,
        format!(
            "{} files identical ({policies} policies, {reports} reports)",
            first.len()
        ),
        format!("differing files: {differing:?}"),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("PRESCRIPTOR_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [Criterion; 9] = [
        (1, "MDP correctness oracle", criterion_1),
        (2, "probability normalization", criterion_2),
        (3, "RL optimality oracle", criterion_3),
        (4, "scaling semantics", criterion_4),
        (5, "overfitting mitigation", criterion_5),
        (6, "simulated reward above log reward", criterion_6),
        (7, "preset acceptance rates", criterion_7),
        (8, "evaluation consistency", criterion_8),
        (9, "pipeline determinism", criterion_9),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {id} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} of {ran} criteria pass", ran - failed);
    if failed > 0 && std::env::var("PRESCRIPTOR_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
