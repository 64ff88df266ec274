use serde::{Deserialize, Serialize};

use super::{ClusterTag, Mdp, MdpBuilder, MdpError, State};
use crate::clustering::KMeansModel;
use crate::encoding::{encode, encode_ongoing, NormalizationStats};
use crate::eventlog::{Event, EventLog, Owner, Trace};

/// Which edge a prefix reward `r(σ_k)` is averaged into.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardAttribution {
    /// The edge the prefix's last event traverses.
    #[default]
    Traversed,
    /// The edge of the last agent event at or before the prefix end, so only
    /// agent edges carry reward. Prefixes without any agent event fall back to
    /// the traversed edge.
    LastAgentAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    pub gamma: f64,
    pub attribution: RewardAttribution,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            gamma: 0.99,
            attribution: RewardAttribution::Traversed,
        }
    }
}

/// State of an ongoing prefix: its last activity paired with the cluster of
/// the prefix one event shorter.
pub fn state_of(prefix: &[Event], kmeans: &KMeansModel, stats: &NormalizationStats) -> Result<State, MdpError> {
    let Some(last) = prefix.last() else {
        return Ok(State::Start);
    };
    if stats.index_of(&last.activity).is_none() {
        return Err(crate::encoding::EncodingError::UnknownActivity(last.activity.clone()).into());
    }
    let before = &prefix[..prefix.len() - 1];
    let cluster = if before.is_empty() {
        ClusterTag::Start
    } else {
        ClusterTag::Id(kmeans.assign(&encode_ongoing(before, stats)?)?)
    };
    Ok(State::node(last.activity.clone(), cluster))
}

/// States visited by replaying a training trace, `START` first.
pub(crate) fn trace_states(
    trace: &Trace,
    kmeans: &KMeansModel,
    stats: &NormalizationStats,
) -> Result<Vec<State>, MdpError> {
    let mut states = Vec::with_capacity(trace.len() + 1);
    states.push(State::Start);
    for k in 1..=trace.len() {
        let cluster = if k == 1 {
            ClusterTag::Start
        } else {
            ClusterTag::Id(kmeans.assign(&encode(trace, k - 1, stats)?)?)
        };
        states.push(State::node(trace.events[k - 1].activity.clone(), cluster));
    }
    Ok(states)
}

pub fn build(
    log: &EventLog,
    kmeans: &KMeansModel,
    stats: &NormalizationStats,
    opts: &BuildOptions,
) -> Result<Mdp, MdpError> {
    if log.is_empty() {
        return Err(MdpError::EmptyLog);
    }
    let stats_hash = stats.alphabet_hash();
    if !kmeans.alphabet_hash.is_empty() && kmeans.alphabet_hash != stats_hash {
        return Err(MdpError::EncodingMismatch {
            kmeans: kmeans.alphabet_hash.clone(),
            stats: stats_hash,
        });
    }
    if kmeans.dim() != stats.dim() {
        return Err(MdpError::EncodingMismatch {
            kmeans: format!("dimension {}", kmeans.dim()),
            stats: format!("dimension {}", stats.dim()),
        });
    }

    let mut mb = MdpBuilder::new();
    for trace in log.traces() {
        let states = trace_states(trace, kmeans, stats)?;
        let mut last_agent: Option<usize> = None;
        for k in 1..=trace.len() {
            let action = &trace.events[k - 1].activity;
            mb.traverse(&states[k - 1], action, &states[k], 1);
            if trace.events[k - 1].owner == Owner::Agent {
                last_agent = Some(k);
            }
            let at = match opts.attribution {
                RewardAttribution::Traversed => k,
                RewardAttribution::LastAgentAction => last_agent.unwrap_or(k),
            };
            mb.reward_sample(
                &states[at - 1],
                &trace.events[at - 1].activity,
                &states[at],
                trace.prefix_reward(k),
            );
        }
        mb.terminate(&states[trace.len()], 1);
    }
    Ok(mb.finish_with(
        log.agent_activities().iter().cloned(),
        opts.gamma,
        stats_hash,
        kmeans.fingerprint(),
    ))
}
