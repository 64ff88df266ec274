use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::eventlog::{KpiSpec, Owner};

/// Gamma-distributed duration with the given mean and coefficient of variation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Duration {
    pub mean_hours: f64,
    #[serde(default = "default_cv")]
    pub cv: f64,
}

fn default_cv() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivitySpec {
    pub owner: Owner,
    pub duration: Duration,
}

/// Log-normal loan amount, clamped and rounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmountSpec {
    pub mu: f64,
    pub sigma: f64,
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub round_to: f64,
}

/// Linear score over case features; softmax of scores gives branch odds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Logit {
    pub intercept: f64,
    /// Per `amount_scale` units of requested amount.
    pub amount: f64,
    pub offers: f64,
    pub calls: f64,
}

impl Logit {
    pub fn score(&self, f: &Features) -> f64 {
        self.intercept + self.amount * f.amount + self.offers * f.offers as f64 + self.calls * f.calls as f64
    }
}

/// Case features the gateways condition on.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Features {
    pub amount: f64,
    pub offers: u32,
    pub calls: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub activity: String,
    pub next: String,
    #[serde(default)]
    pub logit: Logit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gateway {
    /// The environment picks a branch.
    Chance {
        options: Vec<Branch>,
    },
    /// Pre-acceptance of the application, with the model-level probability.
    Preaccept {
        accept: Branch,
        reject: Branch,
    },
    /// Single decision point: only the agent can act.
    Agent {
        options: Vec<Branch>,
    },
    /// Multiple decision point: the environment responds first with the
    /// softmax odds of its branches against a zero-score "no response";
    /// without a response the agent acts.
    Mixed {
        environment: Vec<Branch>,
        agent: Vec<Branch>,
    },
    End,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub offers_activity: String,
    pub calls_activity: String,
    pub amount_scale: f64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            offers_activity: "create_offer".into(),
            calls_activity: "call_customer".into(),
            amount_scale: 10_000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub name: String,
    /// Default log size for this preset.
    pub n_traces: usize,
    pub preaccept_probability: f64,
    pub amount: AmountSpec,
    /// Mean time between case arrivals.
    pub interarrival_hours: f64,
    /// Mean idle time between consecutive events of a case.
    pub gap_hours: f64,
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default)]
    pub kpi: KpiSpec,
    /// Consecutive agent activities without an environment response after
    /// which a simulated case is abandoned.
    #[serde(default = "default_stall_limit")]
    pub stall_limit: usize,
    /// Hard cap on events per case.
    #[serde(default = "default_max_events")]
    pub max_events: usize,
    pub start: String,
    pub activities: BTreeMap<String, ActivitySpec>,
    pub gateways: BTreeMap<String, Gateway>,
}

fn default_stall_limit() -> usize {
    50
}

fn default_max_events() -> usize {
    500
}

const PRESETS: [(&str, &str); 4] = [
    ("common_small", include_str!("presets/common_small.json")),
    ("common_big", include_str!("presets/common_big.json")),
    ("rare_small", include_str!("presets/rare_small.json")),
    ("rare_big", include_str!("presets/rare_big.json")),
];

impl ProcessModel {
    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn preset(name: &str) -> Result<ProcessModel, SimError> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| SimError::UnknownPreset(name.to_string()))?;
        let model: ProcessModel = serde_json::from_str(text).map_err(|e| SimError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<ProcessModel, SimError> {
        let model: ProcessModel = serde_json::from_str(text).map_err(|e| SimError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn agent_activities(&self) -> BTreeSet<String> {
        self.activities
            .iter()
            .filter(|(_, a)| a.owner == Owner::Agent)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn owner_of(&self, activity: &str) -> Owner {
        self.activities.get(activity).map_or(Owner::Environment, |a| a.owner)
    }

    pub fn gateway(&self, id: &str) -> &Gateway {
        &self.gateways[id]
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidModel(m));
        if !(0.0..=1.0).contains(&self.preaccept_probability) {
            return bad(format!(
                "preaccept_probability {} outside [0, 1]",
                self.preaccept_probability
            ));
        }
        let a = &self.amount;
        if !(a.sigma >= 0.0 && a.min > 0.0 && a.min <= a.max && a.round_to >= 0.0) {
            return bad("amount distribution parameters are inconsistent".into());
        }
        if !(self.interarrival_hours >= 0.0 && self.gap_hours >= 0.0 && self.features.amount_scale > 0.0) {
            return bad("time and scale parameters must be non-negative".into());
        }
        if self.stall_limit == 0 || self.max_events == 0 {
            return bad("stall_limit and max_events must be positive".into());
        }
        for (name, spec) in &self.activities {
            if !(spec.duration.mean_hours >= 0.0 && spec.duration.cv > 0.0) {
                return bad(format!("activity {name}: bad duration"));
            }
        }
        if !self.gateways.contains_key(&self.start) {
            return bad(format!("start gateway {} is not defined", self.start));
        }
        for (id, g) in &self.gateways {
            let (env, agent) = branches(g);
            let empty = match g {
                Gateway::Chance { options } | Gateway::Agent { options } => options.is_empty(),
                Gateway::Mixed { environment, agent } => environment.is_empty() || agent.is_empty(),
                _ => false,
            };
            if empty {
                return bad(format!("gateway {id} has no branches"));
            }
            for (b, owner) in env
                .iter()
                .map(|b| (b, Owner::Environment))
                .chain(agent.iter().map(|b| (b, Owner::Agent)))
            {
                let Some(spec) = self.activities.get(&b.activity) else {
                    return bad(format!("gateway {id}: undeclared activity {}", b.activity));
                };
                if spec.owner != owner {
                    return bad(format!("gateway {id}: {} has the wrong owner", b.activity));
                }
                if !self.gateways.contains_key(&b.next) {
                    return bad(format!("gateway {id}: unknown successor {}", b.next));
                }
            }
        }

        // every gateway must be able to reach an end
        let mut preds: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (id, g) in &self.gateways {
            let (env, agent) = branches(g);
            for b in env.iter().chain(&agent) {
                preds.entry(b.next.as_str()).or_default().push(id);
            }
        }
        let mut done: BTreeSet<&str> = BTreeSet::new();
        let mut queue: VecDeque<&str> = self
            .gateways
            .iter()
            .filter(|(_, g)| matches!(g, Gateway::End))
            .map(|(id, _)| id.as_str())
            .collect();
        done.extend(queue.iter().copied());
        while let Some(id) = queue.pop_front() {
            for &p in preds.get(id).into_iter().flatten() {
                if done.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        if let Some(id) = self.gateways.keys().find(|id| !done.contains(id.as_str())) {
            return bad(format!("no end is reachable from gateway {id}"));
        }
        Ok(())
    }
}

/// (environment branches, agent branches) of a gateway.
pub(crate) fn branches(g: &Gateway) -> (Vec<&Branch>, Vec<&Branch>) {
    match g {
        Gateway::Chance { options } => (options.iter().collect(), vec![]),
        Gateway::Preaccept { accept, reject } => (vec![accept, reject], vec![]),
        Gateway::Agent { options } => (vec![], options.iter().collect()),
        Gateway::Mixed { environment, agent } => (environment.iter().collect(), agent.iter().collect()),
        Gateway::End => (vec![], vec![]),
    }
}

/// Softmax over `scores`, with an optional extra zero score appended.
pub(crate) fn softmax(scores: &[f64], with_reference: bool) -> Vec<f64> {
    let reference = if with_reference { Some(0.0) } else { None };
    let max = scores
        .iter()
        .copied()
        .chain(reference)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .copied()
        .chain(reference)
        .map(|s| (s - max).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
