//! Policy learning on a mined MDP.
//!
//! Both learners sample episodes from the MDP's empirical dynamics. Monte
//! Carlo policy iteration keeps unscaled return means and selects actions by
//! the occurrence-scaled value q̃ = q · h(n); Q-learning is the unscaled
//! comparator.

mod dynamics;
mod montecarlo;
mod qlearning;
mod scaling;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use montecarlo::mc_policy_iteration;
pub use qlearning::q_learning;
pub use scaling::{scaled_q, ScalingFn, ScalingSpec};

use crate::mdp::{Mdp, State};

#[derive(Debug, thiserror::Error)]
pub enum RlError {
    #[error("the MDP has no state where the agent can act")]
    NoAgentDecisions,
    #[error("the MDP has no START state")]
    MissingStart,
    #[error("no agent action available at {0}")]
    NoActionsAvailable(State),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("malformed policy file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: u64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Per-episode multiplicative decay; `None` reaches `epsilon_end` after
    /// 80% of the episodes.
    pub epsilon_decay: Option<f64>,
    /// Q-learning step size.
    pub alpha: f64,
    pub seed: u64,
    pub max_episode_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 50_000,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: None,
            alpha: 0.1,
            seed: 0,
            max_episode_len: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        if self.episodes == 0 {
            return bad("episodes must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon bounds must lie in [0, 1]");
        }
        if let Some(d) = self.epsilon_decay {
            if !(d > 0.0 && d <= 1.0) {
                return bad("epsilon_decay must lie in (0, 1]");
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if self.max_episode_len == 0 {
            return bad("max_episode_len must be positive");
        }
        Ok(())
    }

    pub fn decay(&self) -> f64 {
        if let Some(d) = self.epsilon_decay {
            return d;
        }
        if self.epsilon_end >= self.epsilon_start || self.epsilon_end <= 0.0 {
            return 1.0;
        }
        let span = (0.8 * self.episodes as f64).max(1.0);
        (self.epsilon_end / self.epsilon_start).powf(1.0 / span)
    }

    /// Exploration rate for episode `i`, given the precomputed decay.
    pub fn epsilon(&self, i: u64, decay: f64) -> f64 {
        if self.epsilon_end >= self.epsilon_start {
            return self.epsilon_start;
        }
        (self.epsilon_start * decay.powf(i as f64)).max(self.epsilon_end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub q: f64,
    pub visits: u64,
}

/// Raw action values for every agent pair of an MDP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub gamma: f64,
    pub values: BTreeMap<State, BTreeMap<String, QEntry>>,
}

impl QTable {
    pub fn q(&self, state: &State, action: &str) -> Option<f64> {
        self.entry(state, action).map(|e| e.q)
    }

    pub fn visits(&self, state: &State, action: &str) -> u64 {
        self.entry(state, action).map_or(0, |e| e.visits)
    }

    pub fn entry(&self, state: &State, action: &str) -> Option<&QEntry> {
        self.values.get(state)?.get(action)
    }

    fn from_arrays(mdp: &Mdp, dynamics: &dynamics::Dynamics, q: &[f64], visits: &[u64], gamma: f64) -> Self {
        let mut values: BTreeMap<State, BTreeMap<String, QEntry>> = BTreeMap::new();
        for (p, &(s, j)) in dynamics.pairs.iter().enumerate() {
            values.entry(mdp.states()[s].clone()).or_default().insert(
                dynamics.nodes[s].agent[j].action.clone(),
                QEntry {
                    q: q[p],
                    visits: visits[p],
                },
            );
        }
        QTable { gamma, values }
    }
}

/// One candidate action at a state, as seen by greedy selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedAction {
    pub action: String,
    pub q: f64,
    pub scaled_q: f64,
    pub support: u64,
}

/// Order used by every greedy choice: q̃ descending, then higher n, then label.
fn rank_order(a: &RankedAction, b: &RankedAction) -> Ordering {
    b.scaled_q
        .partial_cmp(&a.scaled_q)
        .unwrap_or(Ordering::Equal)
        .then(b.support.cmp(&a.support))
        .then_with(|| a.action.cmp(&b.action))
}

/// Agent actions at `state`, best first. Pairs missing from the table count
/// as q = 0.
pub fn ranked_actions(qtable: &QTable, scaling: &ScalingFn, mdp: &Mdp, state: &State) -> Vec<RankedAction> {
    let mut out: Vec<RankedAction> = mdp
        .agent_actions_at(state)
        .into_iter()
        .map(|(a, n)| {
            let q = qtable.q(state, a).unwrap_or(0.0);
            RankedAction {
                action: a.to_string(),
                q,
                scaled_q: scaled_q(q, scaling, n) + 0.0,
                support: n,
            }
        })
        .collect();
    out.sort_by(rank_order);
    out
}

pub fn greedy_action(qtable: &QTable, scaling: &ScalingFn, mdp: &Mdp, state: &State) -> Result<String, RlError> {
    ranked_actions(qtable, scaling, mdp, state)
        .into_iter()
        .next()
        .map(|r| r.action)
        .ok_or_else(|| RlError::NoActionsAvailable(state.clone()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    MonteCarlo,
    QLearning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub algorithm: Algorithm,
    pub train: TrainConfig,
    /// Decay actually applied per episode.
    pub epsilon_decay: f64,
    pub mdp_kmeans_ref: String,
    pub mdp_alphabet_hash: String,
}

/// The greedy choice at one state, with its diagnostics.
pub type Decision = RankedAction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub scaling: ScalingFn,
    pub provenance: Provenance,
    /// Greedy action per agent-decision state.
    pub action_of: BTreeMap<State, Decision>,
}

impl Policy {
    pub fn extract(qtable: &QTable, scaling: ScalingFn, mdp: &Mdp, provenance: Provenance) -> Self {
        let action_of = mdp
            .decision_states()
            .filter_map(|s| {
                let best = ranked_actions(qtable, &scaling, mdp, s).into_iter().next()?;
                Some((s.clone(), best))
            })
            .collect();
        Policy {
            scaling,
            provenance,
            action_of,
        }
    }

    pub fn action(&self, state: &State) -> Option<&str> {
        self.action_of.get(state).map(|d| d.action.as_str())
    }

    pub fn write_json(&self, path: &Path) -> Result<(), RlError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| RlError::Format(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self, RlError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| RlError::Format(e.to_string()))
    }
}

/// Greedy local index at a compiled node, same order as [`rank_order`].
fn greedy_index(node: &dynamics::Node, q: &[f64], h: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_n = 0;
    for (j, a) in node.agent.iter().enumerate() {
        let p = node.pair0 + j;
        let score = q[p] * h[p];
        if score > best_score || (score == best_score && a.n > best_n) {
            best = j;
            best_score = score;
            best_n = a.n;
        }
    }
    best
}

fn prepare(mdp: &Mdp, cfg: &TrainConfig) -> Result<dynamics::Dynamics, RlError> {
    cfg.validate()?;
    let dynamics = dynamics::Dynamics::compile(mdp).ok_or(RlError::MissingStart)?;
    if dynamics.pairs.is_empty() {
        return Err(RlError::NoAgentDecisions);
    }
    Ok(dynamics)
}

fn provenance(mdp: &Mdp, cfg: &TrainConfig, algorithm: Algorithm) -> Provenance {
    Provenance {
        algorithm,
        train: cfg.clone(),
        epsilon_decay: cfg.decay(),
        mdp_kmeans_ref: mdp.kmeans_ref().to_string(),
        mdp_alphabet_hash: mdp.alphabet_hash().to_string(),
    }
}
