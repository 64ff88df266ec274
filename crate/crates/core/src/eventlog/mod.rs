//! Event logs: traces of timestamped activity executions, tagged by owner.
//!
//! A log is parsed from CSV (see [`parse_csv`]), enriched with a trace-level
//! KPI reward (see [`enrich`]) and split into train and test parts. Logs can be
//! checkpointed to a line-delimited JSON file with [`write_jsonl`] and
//! [`read_jsonl`].

mod csv_input;
mod expr;
mod jsonl;
mod kpi;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use csv_input::{format_timestamp, parse_csv, parse_csv_reader, CsvSchema, ISO_8601};
pub use jsonl::{read_jsonl, write_jsonl};
pub use kpi::{enrich, working_hours, KpiKind, KpiSpec, WorkingTime};

/// Errors raised while reading, enriching or partitioning a log.
#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse timestamp: {reason}")]
    UnparseableTimestamp { row: usize, reason: String },
    #[error("event log contains no traces")]
    EmptyLog,
    #[error("unknown activity `{0}`")]
    UnknownActivity(String),
    #[error("trace `{case_id}` lacks attribute `{attribute}`")]
    MissingAttribute { case_id: String, attribute: String },
    #[error("invalid KPI specification: {0}")]
    InvalidKpi(String),
    #[error("partition leaves the {0} side empty")]
    DegeneratePartition(&'static str),
    #[error("invalid train fraction {0}; must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("malformed log checkpoint at line {line}: {reason}")]
    Checkpoint { line: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Who executes an activity: the agent is steered by the policy, the
/// environment is not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Owner {
    Agent,
    Environment,
}

/// Scalar payload value attached to an event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl AttrValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Number(x) => Some(*x),
            AttrValue::Text(s) => s.trim().parse().ok(),
            AttrValue::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
        }
    }

    /// Interprets raw CSV text: numbers and booleans are typed, the rest is text.
    pub fn from_text(raw: &str) -> AttrValue {
        let t = raw.trim();
        if let Ok(x) = t.parse::<f64>() {
            if x.is_finite() {
                return AttrValue::Number(x);
            }
        }
        match t {
            "true" | "TRUE" | "True" => AttrValue::Bool(true),
            "false" | "FALSE" | "False" => AttrValue::Bool(false),
            _ => AttrValue::Text(raw.to_string()),
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Bool(b) => write!(f, "{b}"),
            AttrValue::Number(x) => write!(f, "{x}"),
            AttrValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub activity: String,
    /// Milliseconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub owner: Owner,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub payload: BTreeMap<String, AttrValue>,
}

impl Event {
    pub fn new(activity: impl Into<String>, timestamp: i64) -> Self {
        Event {
            activity: activity.into(),
            timestamp,
            owner: Owner::Environment,
            payload: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: AttrValue) -> Self {
        self.payload.insert(name.into(), value);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
    /// KPI of the complete trace; zero until the log is enriched.
    #[serde(default)]
    pub reward: f64,
}

impl Trace {
    pub fn new(case_id: impl Into<String>, events: Vec<Event>) -> Self {
        Trace {
            case_id: case_id.into(),
            events,
            reward: 0.0,
        }
    }

    /// Builds a trace from bare activity labels with unit-spaced timestamps.
    pub fn from_activities<S: AsRef<str>>(case_id: impl Into<String>, activities: &[S]) -> Self {
        let events = activities
            .iter()
            .enumerate()
            .map(|(i, a)| Event::new(a.as_ref(), i as i64 * 1000))
            .collect();
        Trace::new(case_id, events)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The first `k` events.
    pub fn prefix(&self, k: usize) -> &[Event] {
        &self.events[..k.min(self.events.len())]
    }

    pub fn activities(&self) -> impl Iterator<Item = &str> + '_ {
        self.events.iter().map(|e| e.activity.as_str())
    }

    /// Reward of the prefix of length `k`: the trace KPI when complete, else 0.
    pub fn prefix_reward(&self, k: usize) -> f64 {
        if k == self.len() {
            self.reward
        } else {
            0.0
        }
    }

    /// First numeric value of a payload attribute along the trace.
    pub fn attribute(&self, name: &str) -> Option<f64> {
        self.events
            .iter()
            .find_map(|e| e.payload.get(name).and_then(AttrValue::as_f64))
    }

    pub fn has_agent_event(&self) -> bool {
        self.events.iter().any(|e| e.owner == Owner::Agent)
    }
}

/// Number of occurrences of `activity` in a prefix.
pub fn frequency(prefix: &[Event], activity: &str) -> usize {
    prefix.iter().filter(|e| e.activity == activity).count()
}

/// 1-based position of the last occurrence of `activity`, 0 when absent.
pub fn position(prefix: &[Event], activity: &str) -> usize {
    prefix.iter().rposition(|e| e.activity == activity).map_or(0, |i| i + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    traces: Vec<Trace>,
    alphabet: BTreeSet<String>,
    agent_activities: BTreeSet<String>,
}

impl EventLog {
    /// Assembles a log, deriving the alphabet and tagging event owners.
    ///
    /// Agent activities that never occur are still part of the alphabet.
    pub fn new<I, S>(mut traces: Vec<Trace>, agent_activities: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let agent_activities: BTreeSet<String> = agent_activities.into_iter().map(Into::into).collect();
        let mut alphabet = agent_activities.clone();
        for trace in &mut traces {
            for event in &mut trace.events {
                event.owner = if agent_activities.contains(&event.activity) {
                    Owner::Agent
                } else {
                    Owner::Environment
                };
                if !alphabet.contains(&event.activity) {
                    alphabet.insert(event.activity.clone());
                }
            }
        }
        EventLog {
            traces,
            alphabet,
            agent_activities,
        }
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn into_traces(self) -> Vec<Trace> {
        self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn alphabet(&self) -> &BTreeSet<String> {
        &self.alphabet
    }

    pub fn agent_activities(&self) -> &BTreeSet<String> {
        &self.agent_activities
    }

    pub fn owner_of(&self, activity: &str) -> Owner {
        if self.agent_activities.contains(activity) {
            Owner::Agent
        } else {
            Owner::Environment
        }
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn mean_reward(&self) -> f64 {
        if self.traces.is_empty() {
            return f64::NAN;
        }
        self.traces.iter().map(|t| t.reward).sum::<f64>() / self.traces.len() as f64
    }

    pub fn frequency(&self, prefix: &[Event], activity: &str) -> Result<usize, LogError> {
        self.check_activity(activity)?;
        Ok(frequency(prefix, activity))
    }

    pub fn position(&self, prefix: &[Event], activity: &str) -> Result<usize, LogError> {
        self.check_activity(activity)?;
        Ok(position(prefix, activity))
    }

    fn check_activity(&self, activity: &str) -> Result<(), LogError> {
        if self.alphabet.contains(activity) {
            Ok(())
        } else {
            Err(LogError::UnknownActivity(activity.to_string()))
        }
    }

    /// Same agent set and alphabet declaration, different traces.
    pub(crate) fn with_traces(&self, traces: Vec<Trace>) -> EventLog {
        let mut log = EventLog::new(traces, self.agent_activities.iter().cloned());
        log.alphabet.extend(self.alphabet.iter().cloned());
        log
    }
}

/// Options for [`split`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub train_fraction: f64,
    pub seed: u64,
    /// Drop test traces without any agent event: the agent cannot change them.
    #[serde(default)]
    pub exclude_undecidable_test: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            train_fraction: 0.8,
            seed: 0,
            exclude_undecidable_test: true,
        }
    }
}

/// Random trace-level partition into (train, test).
///
/// The train side receives `round(n * train_fraction)` traces; both sides keep
/// the original log order.
pub fn split(log: &EventLog, opts: &SplitOptions) -> Result<(EventLog, EventLog), LogError> {
    let frac = opts.train_fraction;
    if !(frac > 0.0 && frac < 1.0) {
        return Err(LogError::InvalidFraction(frac));
    }
    let n = log.len();
    let n_train = (n as f64 * frac).round() as usize;
    if n_train == 0 {
        return Err(LogError::DegeneratePartition("train"));
    }
    if n_train >= n {
        return Err(LogError::DegeneratePartition("test"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let chosen: HashSet<usize> = order[..n_train].iter().copied().collect();

    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (i, trace) in log.traces().iter().enumerate() {
        if chosen.contains(&i) {
            train.push(trace.clone());
        } else if !opts.exclude_undecidable_test || trace.has_agent_event() {
            test.push(trace.clone());
        }
    }
    if test.is_empty() {
        return Err(LogError::DegeneratePartition("test"));
    }
    Ok((log.with_traces(train), log.with_traces(test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma() -> Vec<Event> {
        vec![Event::new("a1", 1), Event::new("a2", 2), Event::new("a1", 3)]
    }

    #[test]
    fn frequency_counts_occurrences() {
        let s = sigma();
        assert_eq!(frequency(&s, "a1"), 2);
        assert_eq!(frequency(&s, "a3"), 0);
        assert_eq!(frequency(&[], "a1"), 0);
    }

    #[test]
    fn position_is_last_one_based_index() {
        let s = sigma();
        assert_eq!(position(&s, "a1"), 3);
        assert_eq!(position(&s, "a2"), 2);
        assert_eq!(position(&s, "a3"), 0);
    }

    #[test]
    fn log_queries_reject_unknown_activities() {
        let log = EventLog::new(vec![Trace::from_activities("c", &["a1", "a2", "a1"])], ["a2"]);
        let s = sigma();
        assert_eq!(log.frequency(&s, "a1").unwrap(), 2);
        assert!(matches!(
            log.position(&s, "zz"),
            Err(LogError::UnknownActivity(a)) if a == "zz"
        ));
    }

    #[test]
    fn owners_follow_agent_set_and_alphabet_includes_unseen_agents() {
        let log = EventLog::new(vec![Trace::from_activities("c", &["A", "B"])], ["B", "Z"]);
        let t = &log.traces()[0];
        assert_eq!(t.events[0].owner, Owner::Environment);
        assert_eq!(t.events[1].owner, Owner::Agent);
        let alpha: Vec<_> = log.alphabet().iter().cloned().collect();
        assert_eq!(alpha, ["A", "B", "Z"]);
    }

    fn numbered(n: usize) -> EventLog {
        let traces = (0..n)
            .map(|i| Trace::from_activities(format!("c{i}"), &["A", "B"]))
            .collect();
        EventLog::new(traces, ["B"])
    }

    #[test]
    fn split_sizes_and_determinism() {
        let log = numbered(10);
        let opts = SplitOptions {
            train_fraction: 0.8,
            seed: 7,
            exclude_undecidable_test: false,
        };
        let (tr, te) = split(&log, &opts).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr2, te2) = split(&log, &opts).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);

        let (tr, te) = split(&numbered(2000), &opts).unwrap();
        assert_eq!((tr.len(), te.len()), (1600, 400));
    }

    #[test]
    fn split_excludes_test_traces_without_decisions() {
        let mut traces: Vec<Trace> = (0..10)
            .map(|i| Trace::from_activities(format!("c{i}"), &["A"]))
            .collect();
        traces.push(Trace::from_activities("d", &["A", "B"]));
        let log = EventLog::new(traces, ["B"]);
        for seed in 0..20 {
            let opts = SplitOptions {
                train_fraction: 0.5,
                seed,
                exclude_undecidable_test: true,
            };
            match split(&log, &opts) {
                Ok((_, te)) => assert!(te.traces().iter().all(Trace::has_agent_event)),
                Err(e) => assert!(matches!(e, LogError::DegeneratePartition("test"))),
            }
        }
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        let log = numbered(1);
        let opts = SplitOptions {
            train_fraction: 0.8,
            seed: 0,
            exclude_undecidable_test: false,
        };
        assert!(matches!(split(&log, &opts), Err(LogError::DegeneratePartition(_))));
        let bad = SplitOptions {
            train_fraction: 1.0,
            ..opts
        };
        assert!(matches!(split(&numbered(5), &bad), Err(LogError::InvalidFraction(_))));
    }
}
