//! Synthetic loan-process logs and policy-in-the-loop simulation.
//!
//! A [`ProcessModel`] is a graph of gateways whose branch odds are softmaxes
//! of linear scores over the loan amount, the offers created and the calls
//! made so far. Generating a log walks the graph with the model's own agent
//! behaviour; simulating a policy walks the same graph but lets the policy
//! pick the agent activities, the environment keeping priority at mixed
//! gateways.

mod engine;
mod model;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use engine::{check_trace, run_case, AgentController, CaseRun, Choice, Ending};
pub use model::{ActivitySpec, AmountSpec, Branch, Duration, FeatureSpec, Features, Gateway, Logit, ProcessModel};

use crate::eventlog::{Event, EventLog};
use crate::recommender::Recommender;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid process model: {0}")]
    InvalidModel(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("policy alphabet contains {0}, which the process model does not know")]
    IncompatibleAlphabet(String),
    #[error("n_traces must be at least 1")]
    NoTraces,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Runs `n` cases in parallel; results are in case order and independent of
/// scheduling.
fn run_cases(model: &ProcessModel, n: usize, seed: u64, controller: Option<&dyn AgentController>) -> Vec<CaseRun> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| run_case(model, seed, i, controller))
        .collect()
}

pub fn generate_log(model: &ProcessModel, n_traces: usize, seed: u64) -> Result<EventLog, SimError> {
    model.validate()?;
    if n_traces == 0 {
        return Err(SimError::NoTraces);
    }
    let traces = run_cases(model, n_traces, seed, None)
        .into_iter()
        .map(|r| r.trace)
        .collect();
    Ok(EventLog::new(traces, model.agent_activities()))
}

/// Lets a trained policy act; unknown or non-decision states defer to the
/// model's own agent behaviour and are counted as abstentions.
pub struct PolicyController<'a> {
    pub recommender: Recommender<'a>,
}

impl AgentController for PolicyController<'_> {
    fn choose(&self, prefix: &[Event], _allowed: &[&str]) -> Choice {
        match self.recommender.recommend(prefix) {
            Ok(r) => Choice::Act(r.action),
            Err(_) => Choice::Abstain,
        }
    }
}

/// Simulated performance of one agent behaviour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEntry {
    pub name: String,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub n_traces: usize,
    pub exceptions: usize,
    pub stalls: usize,
    /// Agent turns where the policy had no recommendation.
    pub abstentions: u64,
    /// Fraction of cases containing the accept activity.
    pub acceptance_rate: f64,
    #[serde(skip)]
    pub rewards: Vec<f64>,
}

impl SimEntry {
    fn from_runs(name: &str, model: &ProcessModel, runs: &[CaseRun]) -> Self {
        let rewards: Vec<f64> = runs.iter().map(|r| r.trace.reward).collect();
        let (mean, std) = mean_std(&rewards);
        let accept = &model.kpi.accept_activity;
        let accepted = runs
            .iter()
            .filter(|r| r.trace.activities().any(|a| a == accept))
            .count();
        SimEntry {
            name: name.to_string(),
            mean_reward: mean,
            std_reward: std,
            n_traces: runs.len(),
            exceptions: runs.iter().filter(|r| r.ending == Ending::Exception).count(),
            stalls: runs.iter().filter(|r| r.ending == Ending::Stalled).count(),
            abstentions: runs.iter().map(|r| r.abstentions as u64).sum(),
            acceptance_rate: accepted as f64 / runs.len().max(1) as f64,
            rewards,
        }
    }
}

/// Mean and sample standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Simulates `n_traces` cases with `controller` choosing agent activities.
pub fn simulate(
    model: &ProcessModel,
    name: &str,
    controller: Option<&dyn AgentController>,
    n_traces: usize,
    seed: u64,
) -> Result<SimEntry, SimError> {
    model.validate()?;
    if n_traces == 0 {
        return Err(SimError::NoTraces);
    }
    let runs = run_cases(model, n_traces, seed, controller);
    Ok(SimEntry::from_runs(name, model, &runs))
}

/// Simulation evaluation of a trained policy.
pub fn simulate_with_policy(
    model: &ProcessModel,
    name: &str,
    recommender: Recommender<'_>,
    n_traces: usize,
    seed: u64,
) -> Result<SimEntry, SimError> {
    if let Some(a) = recommender
        .stats
        .alphabet_order
        .iter()
        .find(|a| !model.activities.contains_key(*a))
    {
        return Err(SimError::IncompatibleAlphabet(a.clone()));
    }
    let controller = PolicyController { recommender };
    simulate(model, name, Some(&controller), n_traces, seed)
}

/// Simulation evaluation of several agent behaviours on one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub model: String,
    pub n_traces: usize,
    pub seed: u64,
    pub entries: Vec<SimEntry>,
    pub pairwise: Vec<crate::evaluation::PairwiseTest>,
}

impl SimReport {
    pub fn new(
        model: &ProcessModel,
        n_traces: usize,
        seed: u64,
        entries: Vec<SimEntry>,
    ) -> Result<Self, crate::evaluation::EvalError> {
        let samples: Vec<(String, Vec<f64>)> = entries.iter().map(|e| (e.name.clone(), e.rewards.clone())).collect();
        let pairwise = crate::evaluation::compare_policies(&samples)?;
        Ok(SimReport {
            model: model.name.clone(),
            n_traces,
            seed,
            entries,
            pairwise,
        })
    }
}

/// Writes a log as CSV: `case_id,activity,timestamp,duration,amount`.
pub fn write_csv(log: &EventLog, path: &Path) -> Result<(), SimError> {
    let file = std::fs::File::create(path)?;
    write_csv_to(log, std::io::BufWriter::new(file))
}

pub fn write_csv_to<W: Write>(log: &EventLog, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case_id", "activity", "timestamp", "duration", "amount"])?;
    for t in log.traces() {
        for e in &t.events {
            let attr = |k: &str| e.payload.get(k).map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                t.case_id.as_str(),
                e.activity.as_str(),
                &crate::eventlog::format_timestamp(e.timestamp),
                &attr("duration"),
                &attr("amount"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
