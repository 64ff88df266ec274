//! Runtime phase: map an ongoing prefix to its MDP state and recommend the
//! next activity.

use serde::{Deserialize, Serialize};

use crate::clustering::KMeansModel;
use crate::encoding::{encode_ongoing, EncodingError, NormalizationStats};
use crate::eventlog::Event;
use crate::mdp::{state_of, ClusterTag, Mdp, MdpError, State};
use crate::rl::{ranked_actions, Policy, QTable, RankedAction};

#[derive(Debug, thiserror::Error)]
pub enum RecommendError {
    #[error("activity `{0}` is not in the training alphabet")]
    UnknownActivity(String),
    #[error("state {0} never occurred in training")]
    UnknownState(State),
    #[error("no agent action is possible at {0}; wait for the environment")]
    NotADecisionPoint(State),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub action: String,
    pub q_value: f64,
    pub scaled_q: f64,
    pub support: u64,
    pub state: State,
    /// Unseen state the prefix actually mapped to, when the fallback was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_from: Option<State>,
    pub alternatives: Vec<RankedAction>,
}

/// Trained artifacts needed to answer queries. Read-only; share freely.
#[derive(Clone, Copy)]
pub struct Recommender<'a> {
    pub policy: &'a Policy,
    pub qtable: &'a QTable,
    pub mdp: &'a Mdp,
    pub kmeans: &'a KMeansModel,
    pub stats: &'a NormalizationStats,
    /// Map unseen states to the nearest seen state with the same last activity.
    pub fallback: bool,
}

impl<'a> Recommender<'a> {
    pub fn new(
        policy: &'a Policy,
        qtable: &'a QTable,
        mdp: &'a Mdp,
        kmeans: &'a KMeansModel,
        stats: &'a NormalizationStats,
    ) -> Self {
        Recommender {
            policy,
            qtable,
            mdp,
            kmeans,
            stats,
            fallback: false,
        }
    }

    pub fn with_fallback(mut self, on: bool) -> Self {
        self.fallback = on;
        self
    }

    /// State of `prefix`, which may be absent from the MDP.
    pub fn state_of(&self, prefix: &[Event]) -> Result<State, RecommendError> {
        state_of(prefix, self.kmeans, self.stats).map_err(|e| match e {
            MdpError::Encoding(EncodingError::UnknownActivity(a)) => RecommendError::UnknownActivity(a),
            other => RecommendError::Mdp(other),
        })
    }

    pub fn recommend(&self, prefix: &[Event]) -> Result<Recommendation, RecommendError> {
        if let Some(e) = prefix.iter().find(|e| self.stats.index_of(&e.activity).is_none()) {
            return Err(RecommendError::UnknownActivity(e.activity.clone()));
        }
        let state = self.state_of(prefix)?;
        if self.mdp.contains(&state) {
            return self.at_state(&state);
        }
        if self.fallback {
            if let Some(near) = self.nearest_seen(prefix, &state) {
                let mut r = self.at_state(&near)?;
                r.fallback_from = Some(state);
                return Ok(r);
            }
        }
        Err(RecommendError::UnknownState(state))
    }

    /// Recommendation at a state known to the MDP.
    pub fn at_state(&self, state: &State) -> Result<Recommendation, RecommendError> {
        if !self.mdp.contains(state) {
            return Err(RecommendError::UnknownState(state.clone()));
        }
        let alternatives = ranked_actions(self.qtable, &self.policy.scaling, self.mdp, state);
        let Some(first) = alternatives.first() else {
            return Err(RecommendError::NotADecisionPoint(state.clone()));
        };
        let chosen = match self.policy.action_of.get(state) {
            Some(d) => d.clone(),
            None => first.clone(),
        };
        Ok(Recommendation {
            action: chosen.action,
            q_value: chosen.q,
            scaled_q: chosen.scaled_q,
            support: chosen.support,
            state: state.clone(),
            fallback_from: None,
            alternatives,
        })
    }

    fn nearest_seen(&self, prefix: &[Event], state: &State) -> Option<State> {
        let activity = state.last_activity()?;
        if prefix.len() < 2 {
            return None;
        }
        let v = encode_ongoing(&prefix[..prefix.len() - 1], self.stats).ok()?;
        self.mdp
            .decision_states()
            .filter(|s| s.last_activity() == Some(activity))
            .filter_map(|s| match s.cluster() {
                Some(ClusterTag::Id(c)) if c < self.kmeans.k => Some((self.kmeans.distance_to(c, v.as_slice()), s)),
                _ => None,
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
            .map(|(_, s)| s.clone())
    }
}

/// One-shot query; see [`Recommender`].
pub fn recommend(
    prefix: &[Event],
    policy: &Policy,
    qtable: &QTable,
    mdp: &Mdp,
    kmeans: &KMeansModel,
    stats: &NormalizationStats,
) -> Result<Recommendation, RecommendError> {
    Recommender::new(policy, qtable, mdp, kmeans, stats).recommend(prefix)
}
