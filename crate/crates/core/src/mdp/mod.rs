//! Explicit MDP mined from a clustered event log by trace replay.
//!
//! A state pairs the last executed activity with the cluster of the prefix
//! before it. Every event of every training trace traverses one edge; an
//! edge's probability is its share of the traversals of `(source, action)`.
//! Traces may end in a state that other traces continue from; such endings
//! are kept as per-state termination counts (the END pseudo-action).

mod build;
mod export;
mod validate;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use build::{build, state_of, BuildOptions, RewardAttribution};
pub use export::{read_json, to_dot, write_json, MdpFile};
pub use validate::{validate, ValidationReport, Violation};

use crate::encoding::EncodingError;

#[derive(Debug, thiserror::Error)]
pub enum MdpError {
    #[error("event log contains no traces")]
    EmptyLog,
    #[error("k-means model was fitted on alphabet {kmeans}, encoding uses {stats}")]
    EncodingMismatch { kmeans: String, stats: String },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Cluster(#[from] crate::clustering::ClusterError),
    #[error("malformed MDP file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Cluster component of a state. `Start` marks length-1 prefixes, whose
/// preceding prefix is empty and has no k-means cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClusterTag {
    Start,
    Id(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum State {
    /// The empty prefix.
    Start,
    Node {
        activity: String,
        cluster: ClusterTag,
    },
}

impl State {
    pub fn node(activity: impl Into<String>, cluster: ClusterTag) -> Self {
        State::Node {
            activity: activity.into(),
            cluster,
        }
    }

    pub fn last_activity(&self) -> Option<&str> {
        match self {
            State::Start => None,
            State::Node { activity, .. } => Some(activity),
        }
    }

    pub fn cluster(&self) -> Option<ClusterTag> {
        match self {
            State::Start => None,
            State::Node { cluster, .. } => Some(*cluster),
        }
    }

    /// Stable textual key: `START`, `label@START` or `label@<cluster>`.
    pub fn key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Start => f.write_str("START"),
            State::Node {
                activity,
                cluster: ClusterTag::Start,
            } => write!(f, "{activity}@START"),
            State::Node {
                activity,
                cluster: ClusterTag::Id(c),
            } => write!(f, "{activity}@{c}"),
        }
    }
}

impl FromStr for State {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "START" {
            return Ok(State::Start);
        }
        let (activity, cluster) = s.rsplit_once('@').ok_or_else(|| format!("bad state key `{s}`"))?;
        let cluster = if cluster == "START" {
            ClusterTag::Start
        } else {
            ClusterTag::Id(cluster.parse().map_err(|_| format!("bad cluster in `{s}`"))?)
        };
        Ok(State::node(activity, cluster))
    }
}

impl Serialize for State {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: State,
    pub action: String,
    pub target: State,
    pub count: u64,
    pub probability: f64,
    /// Mean reward of the prefixes attributed to this edge, KPI units.
    pub reward: f64,
    pub reward_samples: u64,
}

/// Role of a state in the decision process.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateKind {
    /// Only agent actions leave the state.
    Decision,
    /// Only environment actions (or trace endings) leave the state.
    Chance,
    /// Both; the environment moves first with its empirical share.
    Mixed,
    Terminal,
}

#[derive(Clone, Debug)]
pub struct Mdp {
    states: Vec<State>,
    edges: Vec<Edge>,
    terminations: BTreeMap<State, u64>,
    agent_actions: BTreeSet<String>,
    gamma: f64,
    alphabet_hash: String,
    kmeans_ref: String,
    index: HashMap<State, usize>,
    /// Edge range per state index.
    out: Vec<(usize, usize)>,
}

impl PartialEq for Mdp {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states
            && self.edges == other.edges
            && self.terminations == other.terminations
            && self.agent_actions == other.agent_actions
            && self.gamma == other.gamma
            && self.alphabet_hash == other.alphabet_hash
            && self.kmeans_ref == other.kmeans_ref
    }
}

impl Mdp {
    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Mutable edge access, for repairs and fault-injection in tests. Derived
    /// indices are unaffected since sources and order must not change.
    pub fn edges_mut(&mut self) -> &mut [Edge] {
        &mut self.edges
    }

    pub fn terminations(&self) -> &BTreeMap<State, u64> {
        &self.terminations
    }

    pub fn agent_actions(&self) -> &BTreeSet<String> {
        &self.agent_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) {
        self.gamma = gamma;
    }

    pub fn alphabet_hash(&self) -> &str {
        &self.alphabet_hash
    }

    pub fn kmeans_ref(&self) -> &str {
        &self.kmeans_ref
    }

    pub fn index_of(&self, state: &State) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn contains(&self, state: &State) -> bool {
        self.index.contains_key(state)
    }

    pub fn is_agent(&self, action: &str) -> bool {
        self.agent_actions.contains(action)
    }

    pub fn outgoing(&self, state: &State) -> &[Edge] {
        self.index_of(state).map_or(&[], |i| self.outgoing_at(i))
    }

    pub fn outgoing_at(&self, i: usize) -> &[Edge] {
        let (a, b) = self.out[i];
        &self.edges[a..b]
    }

    pub fn termination_count(&self, state: &State) -> u64 {
        self.terminations.get(state).copied().unwrap_or(0)
    }

    /// n(s, a): traversals of `action` from `state`.
    pub fn occurrence(&self, state: &State, action: &str) -> u64 {
        self.outgoing(state)
            .iter()
            .filter(|e| e.action == action)
            .map(|e| e.count)
            .sum()
    }

    /// `(action, n(s, a))` for every action leaving `state`, sorted by label.
    pub fn actions_at(&self, state: &State) -> Vec<(&str, u64)> {
        let mut out: Vec<(&str, u64)> = Vec::new();
        for e in self.outgoing(state) {
            match out.last_mut() {
                Some((a, n)) if *a == e.action => *n += e.count,
                _ => out.push((&e.action, e.count)),
            }
        }
        out
    }

    pub fn agent_actions_at(&self, state: &State) -> Vec<(&str, u64)> {
        self.actions_at(state)
            .into_iter()
            .filter(|(a, _)| self.is_agent(a))
            .collect()
    }

    /// Every n(s, a) with `a` an agent action.
    pub fn agent_occurrences(&self) -> impl Iterator<Item = (&State, &str, u64)> + '_ {
        self.states
            .iter()
            .flat_map(move |s| self.agent_actions_at(s).into_iter().map(move |(a, n)| (s, a, n)))
    }

    pub fn kind(&self, state: &State) -> StateKind {
        let mut agent = false;
        let mut env = self.termination_count(state) > 0;
        for e in self.outgoing(state) {
            if self.is_agent(&e.action) {
                agent = true;
            } else {
                env = true;
            }
        }
        let has_edges = !self.outgoing(state).is_empty();
        match (agent, env, has_edges) {
            (false, _, false) => StateKind::Terminal,
            (true, false, _) => StateKind::Decision,
            (true, true, _) => StateKind::Mixed,
            (false, _, true) => StateKind::Chance,
        }
    }

    /// States with no outgoing edge.
    pub fn terminals(&self) -> impl Iterator<Item = &State> + '_ {
        self.states.iter().filter(|s| self.outgoing(s).is_empty())
    }

    /// States where the agent has at least one action.
    pub fn decision_states(&self) -> impl Iterator<Item = &State> + '_ {
        self.states
            .iter()
            .filter(|s| matches!(self.kind(s), StateKind::Decision | StateKind::Mixed))
    }
}

/// Accumulates transitions and produces a normalized [`Mdp`].
#[derive(Clone, Debug, Default)]
pub struct MdpBuilder {
    edges: BTreeMap<(State, String, State), EdgeAcc>,
    terminations: BTreeMap<State, u64>,
    extra_states: BTreeSet<State>,
}

#[derive(Clone, Debug, Default)]
struct EdgeAcc {
    count: u64,
    reward_sum: f64,
    samples: u64,
}

impl MdpBuilder {
    pub fn new() -> Self {
        MdpBuilder::default()
    }

    /// Records `count` traversals without reward samples.
    pub fn traverse(&mut self, source: &State, action: &str, target: &State, count: u64) {
        self.edges
            .entry((source.clone(), action.to_string(), target.clone()))
            .or_default()
            .count += count;
    }

    /// Adds one reward sample to an edge (which need not be traversed yet).
    pub fn reward_sample(&mut self, source: &State, action: &str, target: &State, reward: f64) {
        let acc = self
            .edges
            .entry((source.clone(), action.to_string(), target.clone()))
            .or_default();
        acc.reward_sum += reward;
        acc.samples += 1;
    }

    /// Convenience for hand-built MDPs: `count` traversals with mean reward `reward`.
    pub fn edge(&mut self, source: &State, action: &str, target: &State, count: u64, reward: f64) -> &mut Self {
        self.traverse(source, action, target, count);
        self.reward_sample(source, action, target, reward);
        self
    }

    pub fn terminate(&mut self, state: &State, count: u64) -> &mut Self {
        *self.terminations.entry(state.clone()).or_default() += count;
        self
    }

    pub fn state(&mut self, state: &State) -> &mut Self {
        self.extra_states.insert(state.clone());
        self
    }

    pub fn finish<I, S>(&self, agent_actions: I, gamma: f64) -> Mdp
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.finish_with(agent_actions, gamma, String::new(), String::new())
    }

    pub(crate) fn finish_with<I, S>(
        &self,
        agent_actions: I,
        gamma: f64,
        alphabet_hash: String,
        kmeans_ref: String,
    ) -> Mdp
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut states: BTreeSet<State> = self.extra_states.clone();
        states.insert(State::Start);
        let mut totals: BTreeMap<(&State, &str), u64> = BTreeMap::new();
        for ((s, a, t), acc) in &self.edges {
            states.insert(s.clone());
            states.insert(t.clone());
            *totals.entry((s, a.as_str())).or_default() += acc.count;
        }
        states.extend(self.terminations.keys().cloned());

        let edges: Vec<Edge> = self
            .edges
            .iter()
            .filter(|(_, acc)| acc.count > 0)
            .map(|((s, a, t), acc)| {
                let n = totals[&(s, a.as_str())];
                Edge {
                    source: s.clone(),
                    action: a.clone(),
                    target: t.clone(),
                    count: acc.count,
                    probability: acc.count as f64 / n as f64,
                    reward: if acc.samples > 0 {
                        acc.reward_sum / acc.samples as f64
                    } else {
                        0.0
                    },
                    reward_samples: acc.samples,
                }
            })
            .collect();
        Mdp::assemble(
            states.into_iter().collect(),
            edges,
            self.terminations.clone(),
            agent_actions.into_iter().map(Into::into).collect(),
            gamma,
            alphabet_hash,
            kmeans_ref,
        )
    }
}

impl Mdp {
    /// Builds derived indices; `states` sorted, `edges` sorted by
    /// `(source, action, target)`.
    pub(crate) fn assemble(
        states: Vec<State>,
        edges: Vec<Edge>,
        terminations: BTreeMap<State, u64>,
        agent_actions: BTreeSet<String>,
        gamma: f64,
        alphabet_hash: String,
        kmeans_ref: String,
    ) -> Mdp {
        let index: HashMap<State, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let mut out = vec![(0, 0); states.len()];
        let mut i = 0;
        while i < edges.len() {
            let src = index[&edges[i].source];
            let start = i;
            while i < edges.len() && edges[i].source == edges[start].source {
                i += 1;
            }
            out[src] = (start, i);
        }
        Mdp {
            states,
            edges,
            terminations,
            agent_actions,
            gamma,
            alphabet_hash,
            kmeans_ref,
            index,
            out,
        }
    }
}
