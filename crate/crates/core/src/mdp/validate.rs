use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::Serialize;

use super::{Mdp, State};

/// Probability sums must be within this of 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Σ over targets of P(s, a, ·) differs from 1.
    Normalization {
        state: String,
        action: String,
        sum: f64,
    },
    /// An edge probability disagrees with its count share.
    CountMismatch {
        state: String,
        action: String,
        target: String,
        probability: f64,
        expected: f64,
    },
    ZeroCount {
        state: String,
        action: String,
        target: String,
    },
    /// Non-terminal state that cannot be reached from START.
    Unreachable {
        state: String,
    },
    /// State with neither outgoing edges nor recorded trace endings.
    DeadEnd {
        state: String,
    },
    MissingStart,
    UnknownState {
        state: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Normalization { state, action, sum } => {
                write!(f, "P({state}, {action}, ·) sums to {sum}")
            }
            Violation::CountMismatch {
                state,
                action,
                target,
                probability,
                expected,
            } => write!(
                f,
                "P({state}, {action}, {target}) = {probability}, counts give {expected}"
            ),
            Violation::ZeroCount { state, action, target } => {
                write!(f, "edge ({state}, {action}, {target}) has zero count")
            }
            Violation::Unreachable { state } => write!(f, "{state} is unreachable from START"),
            Violation::DeadEnd { state } => write!(f, "{state} has no outgoing edge and no trace ends there"),
            Violation::MissingStart => f.write_str("START state is missing"),
            Violation::UnknownState { state } => write!(f, "edge refers to undeclared state {state}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate(mdp: &Mdp) -> ValidationReport {
    let mut violations = Vec::new();
    if !mdp.contains(&State::Start) {
        violations.push(Violation::MissingStart);
    }

    let mut groups: BTreeMap<(&State, &str), (u64, f64)> = BTreeMap::new();
    for e in mdp.edges() {
        for s in [&e.source, &e.target] {
            if !mdp.contains(s) {
                violations.push(Violation::UnknownState { state: s.key() });
            }
        }
        if e.count == 0 {
            violations.push(Violation::ZeroCount {
                state: e.source.key(),
                action: e.action.clone(),
                target: e.target.key(),
            });
        }
        let g = groups.entry((&e.source, &e.action)).or_default();
        g.0 += e.count;
        g.1 += e.probability;
    }
    for ((s, a), (_, sum)) in &groups {
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            violations.push(Violation::Normalization {
                state: s.key(),
                action: a.to_string(),
                sum: *sum,
            });
        }
    }
    for e in mdp.edges() {
        let n = groups[&(&e.source, e.action.as_str())].0;
        let expected = e.count as f64 / n as f64;
        if n > 0 && (e.probability - expected).abs() > NORMALIZATION_TOLERANCE {
            violations.push(Violation::CountMismatch {
                state: e.source.key(),
                action: e.action.clone(),
                target: e.target.key(),
                probability: e.probability,
                expected,
            });
        }
    }

    let mut seen = vec![false; mdp.states().len()];
    let mut queue = VecDeque::new();
    if let Some(i) = mdp.index_of(&State::Start) {
        seen[i] = true;
        queue.push_back(i);
    }
    while let Some(i) = queue.pop_front() {
        for e in mdp.outgoing_at(i) {
            if let Some(j) = mdp.index_of(&e.target) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    for (i, s) in mdp.states().iter().enumerate() {
        let ends = mdp.termination_count(s) > 0;
        let has_out = !mdp.outgoing_at(i).is_empty();
        if !seen[i] && has_out {
            violations.push(Violation::Unreachable { state: s.key() });
        }
        if !has_out && !ends && *s != State::Start {
            violations.push(Violation::DeadEnd { state: s.key() });
        }
    }
    ValidationReport { violations }
}
