//! The pipeline stages behind each subcommand.

use std::path::{Path, PathBuf};

use prescriptor::clustering::{ClusterError, KMeansConfig, KMeansModel};
use prescriptor::encoding::NormalizationStats;
use prescriptor::evaluation::{self, evaluate_log, EvalReport};
use prescriptor::eventlog::{enrich, parse_csv, read_jsonl, split, write_jsonl, Event, EventLog};
use prescriptor::mdp::{Mdp, MdpFile};
use prescriptor::pipeline::{mine, PipelineError};
use prescriptor::recommender::{RecommendError, Recommendation, Recommender};
use prescriptor::rl::{mc_policy_iteration, q_learning, Policy, QTable};
use prescriptor::simgen::{self, simulate, simulate_with_policy, SimError, SimReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, policy_file, qtable_file};
use crate::config::Context;
use crate::error::CliError;

/// Summary written next to the trained artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub policies: Vec<String>,
    pub alphabet: Vec<String>,
    pub alphabet_hash: String,
    pub train_traces: usize,
    pub test_traces: usize,
    pub states: usize,
    pub edges: usize,
    pub decision_states: usize,
    pub kmeans_inertia: f64,
    pub kmeans_iterations: usize,
}

/// Everything `train` writes, loaded back.
pub struct Trained {
    pub manifest: Manifest,
    pub stats: NormalizationStats,
    pub kmeans: KMeansModel,
    pub mdp: Mdp,
    pub policies: Vec<(String, Policy, QTable)>,
}

impl Trained {
    pub fn recommender(&self, i: usize, fallback: bool) -> Recommender<'_> {
        let (_, policy, qtable) = &self.policies[i];
        Recommender::new(policy, qtable, &self.mdp, &self.kmeans, &self.stats).with_fallback(fallback)
    }
}

pub fn cmd_generate(ctx: &Context, n_override: Option<usize>) -> Result<PathBuf, CliError> {
    let model = ctx.model()?;
    let n = n_override.or(ctx.config.generate.n_traces).unwrap_or(model.n_traces);
    if n == 0 {
        return Err(CliError::config("--n-traces", "must be at least 1"));
    }
    let log = simgen::generate_log(&model, n, ctx.config.generate.seed).map_err(CliError::failed)?;
    let path = ctx.out.clone().unwrap_or_else(|| ctx.log_path());
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::failed)?;
    }
    if is_jsonl(&path) {
        write_jsonl(&log, &path).map_err(CliError::failed)?;
    } else {
        simgen::write_csv(&log, &path).map_err(CliError::failed)?;
    }
    Ok(path)
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

/// Reads the configured log, tags owners and sets KPI rewards.
pub fn load_log(ctx: &Context) -> Result<EventLog, CliError> {
    let path = ctx.log_path();
    if !path.is_file() {
        return Err(CliError::MissingArtifact {
            path,
            stage: "generate",
        });
    }
    let agents = ctx.agent_activities()?;
    let raw = if is_jsonl(&path) {
        let log = read_jsonl(&path).map_err(|e| CliError::failed(format!("{}: {e}", path.display())))?;
        EventLog::new(log.into_traces(), agents)
    } else {
        parse_csv(&path, &ctx.config.csv, agents).map_err(|e| CliError::failed(format!("{}: {e}", path.display())))?
    };
    enrich(&raw, &ctx.config.kpi).map_err(|e| CliError::config("kpi", e.to_string()))
}

pub fn cmd_train(ctx: &Context) -> Result<PathBuf, CliError> {
    let cfg = &ctx.config;
    let log = load_log(ctx)?;
    let (train, test) = split(&log, &cfg.split).map_err(|e| CliError::config("split", e.to_string()))?;
    let kcfg = KMeansConfig {
        k: cfg.k,
        seed: cfg.kmeans_seed,
        deduplicate: cfg.kmeans_deduplicate,
        ..KMeansConfig::default()
    };
    let mined = mine(&train, &kcfg, &cfg.build).map_err(|e| match e {
        PipelineError::Cluster(ClusterError::KTooLarge { k, distinct }) => CliError::config(
            "k",
            format!("{k} clusters but only {distinct} distinct prefix encodings"),
        ),
        other => CliError::failed(other),
    })?;
    let mdp = &mined.mdp;

    enum Job<'a> {
        MonteCarlo(&'a prescriptor::rl::ScalingSpec),
        QLearning,
    }
    let mut jobs: Vec<Job> = cfg.scaling.iter().map(Job::MonteCarlo).collect();
    if cfg.q_learning {
        jobs.push(Job::QLearning);
    }
    let trained: Vec<(Policy, QTable)> = jobs
        .par_iter()
        .map(|job| match job {
            Job::MonteCarlo(spec) => mc_policy_iteration(mdp, &spec.fit(mdp), &cfg.train),
            Job::QLearning => q_learning(mdp, &cfg.train),
        })
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::failed(format!("training: {e}")))?;

    let dir = ctx.out.clone().unwrap_or_else(|| ctx.artifacts.clone());
    let hash = cfg.training_hash();
    let names = cfg.policy_names();
    let manifest = Manifest {
        policies: names.clone(),
        alphabet: mined.stats.alphabet_order.clone(),
        alphabet_hash: mined.stats.alphabet_hash(),
        train_traces: train.len(),
        test_traces: test.len(),
        states: mdp.states().len(),
        edges: mdp.edges().len(),
        decision_states: mdp.decision_states().count(),
        kmeans_inertia: mined.kmeans.inertia,
        kmeans_iterations: mined.kmeans.iterations,
    };
    artifacts::write(&dir.join("train_log.json"), "event_log", &hash, &train)?;
    artifacts::write(&dir.join("test_log.json"), "event_log", &hash, &test)?;
    artifacts::write(&dir.join("stats.json"), "normalization_stats", &hash, &mined.stats)?;
    artifacts::write(&dir.join("kmeans.json"), "kmeans", &hash, &mined.kmeans)?;
    artifacts::write(&dir.join("mdp.json"), "mdp", &hash, &MdpFile::from(mdp))?;
    for (name, (policy, qtable)) in names.iter().zip(&trained) {
        artifacts::write(&policy_file(&dir, name), "policy", &hash, policy)?;
        artifacts::write(&qtable_file(&dir, name), "qtable", &hash, qtable)?;
    }
    // last, so an interrupted run leaves no manifest
    artifacts::write(&dir.join("manifest.json"), "manifest", &hash, &manifest)?;
    Ok(dir)
}

/// Loads the artifacts of `train`, optionally only the named policies.
pub fn load_trained(ctx: &Context, only: Option<&[String]>) -> Result<Trained, CliError> {
    let dir = &ctx.artifacts;
    let hash = ctx.config.training_hash();
    let manifest: Manifest = artifacts::read(&dir.join("manifest.json"), "manifest", &hash, "train")?;
    let stats: NormalizationStats = artifacts::read(&dir.join("stats.json"), "normalization_stats", &hash, "train")?;
    let kmeans: KMeansModel = artifacts::read(&dir.join("kmeans.json"), "kmeans", &hash, "train")?;
    let mdp_path = dir.join("mdp.json");
    let file: MdpFile = artifacts::read(&mdp_path, "mdp", &hash, "train")?;
    let mdp = Mdp::try_from(file).map_err(|e| CliError::failed(format!("{}: {e}", mdp_path.display())))?;

    let expected = stats.alphabet_hash();
    let mismatch = |path: PathBuf, found: &str| CliError::AlphabetMismatch {
        path,
        reason: format!("alphabet hash {found} differs from {expected} of stats.json"),
    };
    if kmeans.alphabet_hash != expected {
        return Err(mismatch(dir.join("kmeans.json"), &kmeans.alphabet_hash));
    }
    if mdp.alphabet_hash() != expected {
        return Err(mismatch(mdp_path, mdp.alphabet_hash()));
    }

    let mut policies = Vec::new();
    for name in &manifest.policies {
        if only.is_some_and(|o| !o.contains(name)) {
            continue;
        }
        let path = policy_file(dir, name);
        let policy: Policy = artifacts::read(&path, "policy", &hash, "train")?;
        if policy.provenance.mdp_alphabet_hash != expected {
            return Err(mismatch(path, &policy.provenance.mdp_alphabet_hash));
        }
        let qtable: QTable = artifacts::read(&qtable_file(dir, name), "qtable", &hash, "train")?;
        policies.push((name.clone(), policy, qtable));
    }
    if let Some(o) = only {
        if let Some(missing) = o.iter().find(|n| !manifest.policies.contains(n)) {
            return Err(CliError::config(
                "--policy",
                format!(
                    "no trained policy `{missing}`; trained: {}",
                    manifest.policies.join(", ")
                ),
            ));
        }
    }
    Ok(Trained {
        manifest,
        stats,
        kmeans,
        mdp,
        policies,
    })
}

/// Answer for one prefix of `recommend`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub prefix: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<Recommendation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendOutput {
    pub policy: String,
    pub answers: Vec<Answer>,
}

/// Parses `a,b,c`; the empty string is the empty prefix.
pub fn parse_prefix(text: &str) -> Vec<String> {
    let text = text.trim();
    if text.is_empty() {
        return Vec::new();
    }
    text.split(',').map(|a| a.trim().to_string()).collect()
}

pub fn read_prefix_file(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("--prefixes", format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .filter(|l| !l.trim().is_empty())
        .map(parse_prefix)
        .collect())
}

pub fn cmd_recommend(
    ctx: &Context,
    policy: Option<&str>,
    prefixes: &[Vec<String>],
    fallback: bool,
) -> Result<RecommendOutput, CliError> {
    let name = policy
        .map(str::to_string)
        .unwrap_or_else(|| ctx.config.policy_names()[0].clone());
    let trained = load_trained(ctx, Some(std::slice::from_ref(&name)))?;
    let rec = trained.recommender(0, fallback || ctx.config.fallback);
    let answers = prefixes
        .iter()
        .map(|p| {
            let events: Vec<Event> = p.iter().map(|a| Event::new(a.as_str(), 0)).collect();
            let (recommendation, error) = match rec.recommend(&events) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(describe(&e))),
            };
            Answer {
                prefix: p.clone(),
                recommendation,
                error,
            }
        })
        .collect();
    let out = RecommendOutput { policy: name, answers };
    let mut text = serde_json::to_string_pretty(&out).map_err(CliError::failed)?;
    text.push('\n');
    match &ctx.out {
        Some(path) => artifacts::write_bytes(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    let failed = out.answers.iter().filter(|a| a.error.is_some()).count();
    if failed > 0 {
        return Err(CliError::Failed(format!(
            "{failed} of {} prefixes have no recommendation",
            out.answers.len()
        )));
    }
    Ok(out)
}

fn describe(e: &RecommendError) -> String {
    match e {
        RecommendError::UnknownState(_) => format!("{e} (try --fallback)"),
        _ => e.to_string(),
    }
}

fn report_dir(ctx: &Context) -> PathBuf {
    ctx.out.clone().unwrap_or_else(|| ctx.reports.clone())
}

pub fn cmd_eval_sim(ctx: &Context) -> Result<SimReport, CliError> {
    let cfg = &ctx.config;
    let trained = load_trained(ctx, None)?;
    let model = ctx.model()?;
    let (n, seed) = (cfg.sim.n_traces, cfg.sim.seed);
    let mut entries = vec![simulate(&model, "default", None, n, seed).map_err(CliError::failed)?];
    for (i, (name, _, _)) in trained.policies.iter().enumerate() {
        let entry =
            simulate_with_policy(&model, name, trained.recommender(i, cfg.fallback), n, seed).map_err(|e| match e {
                SimError::IncompatibleAlphabet(a) => CliError::AlphabetMismatch {
                    path: policy_file(&ctx.artifacts, name),
                    reason: format!("activity `{a}` is unknown to process model `{}`", model.name),
                },
                other => CliError::failed(other),
            })?;
        entries.push(entry);
    }
    let report = SimReport::new(&model, n, seed, entries).map_err(CliError::failed)?;

    let dir = report_dir(ctx);
    artifacts::write(&dir.join("sim_report.json"), "sim_report", &cfg.config_hash(), &report)?;
    let names: Vec<String> = report.entries.iter().map(|e| e.name.clone()).collect();
    artifacts::write_bytes(
        &dir.join("sim_pairwise.csv"),
        evaluation::pairwise_csv(&report.pairwise).as_bytes(),
    )?;
    artifacts::write_bytes(
        &dir.join("sim_matrix.csv"),
        evaluation::pairwise_matrix_csv(&names, &report.pairwise).as_bytes(),
    )?;
    Ok(report)
}

pub fn cmd_eval_log(ctx: &Context) -> Result<EvalReport, CliError> {
    let cfg = &ctx.config;
    let trained = load_trained(ctx, None)?;
    let test: EventLog = artifacts::read(
        &ctx.artifacts.join("test_log.json"),
        "event_log",
        &cfg.training_hash(),
        "train",
    )?;
    let policies: Vec<(String, Recommender)> = trained
        .policies
        .iter()
        .enumerate()
        .map(|(i, (name, _, _))| (name.clone(), trained.recommender(i, cfg.fallback)))
        .collect();
    let report = evaluate_log(&test, &policies);

    let dir = report_dir(ctx);
    artifacts::write(
        &dir.join("eval_report.json"),
        "eval_report",
        &cfg.config_hash(),
        &report,
    )?;
    artifacts::write_bytes(
        &dir.join("optimal_traces.csv"),
        evaluation::optimal_traces_csv(&report.optimal_traces).as_bytes(),
    )?;
    artifacts::write_bytes(
        &dir.join("prefix_gain.csv"),
        evaluation::prefix_gain_csv(&report.prefix_gain).as_bytes(),
    )?;
    artifacts::write_bytes(
        &dir.join("eval_pairwise.csv"),
        evaluation::pairwise_csv(&report.pairwise_tests).as_bytes(),
    )?;
    Ok(report)
}
