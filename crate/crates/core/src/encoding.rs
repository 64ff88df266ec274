//! Fixed-length prefix encoding: per-activity frequency and last position,
//! normalized by corpus maxima, followed by the normalized trace reward.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eventlog::{Event, EventLog, Trace};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EncodingError {
    #[error("event log contains no traces")]
    EmptyLog,
    #[error("activity `{0}` is not in the training alphabet")]
    UnknownActivity(String),
    #[error("prefix length {k} out of range for a trace of length {len}")]
    OutOfRangePrefix { k: usize, len: usize },
}

/// Corpus constants, fitted on the training log and frozen afterwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub f_max: usize,
    pub p_max: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Lexicographically sorted activity labels.
    pub alphabet_order: Vec<String>,
    /// Set when every training trace has the same reward.
    pub constant_reward: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrefixVector(pub Vec<f64>);

impl PrefixVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn fit_stats(log: &EventLog) -> Result<NormalizationStats, EncodingError> {
    if log.is_empty() {
        return Err(EncodingError::EmptyLog);
    }
    let alphabet_order: Vec<String> = log.alphabet().iter().cloned().collect();
    let mut f_max = 0;
    let mut p_max = 0;
    let mut r_min = f64::INFINITY;
    let mut r_max = f64::NEG_INFINITY;
    let mut counts = vec![0usize; alphabet_order.len()];
    for trace in log.traces() {
        counts.iter_mut().for_each(|c| *c = 0);
        for event in &trace.events {
            if let Ok(i) = alphabet_order.binary_search(&event.activity) {
                counts[i] += 1;
            }
        }
        f_max = f_max.max(counts.iter().copied().max().unwrap_or(0));
        p_max = p_max.max(trace.len());
        r_min = r_min.min(trace.reward);
        r_max = r_max.max(trace.reward);
    }
    Ok(NormalizationStats {
        f_max: f_max.max(1),
        p_max: p_max.max(1),
        r_min,
        r_max,
        alphabet_order,
        constant_reward: r_max == r_min,
    })
}

impl NormalizationStats {
    pub fn dim(&self) -> usize {
        2 * self.alphabet_order.len() + 1
    }

    pub fn index_of(&self, activity: &str) -> Option<usize> {
        self.alphabet_order.binary_search_by(|a| a.as_str().cmp(activity)).ok()
    }

    /// Short digest of the alphabet order, used to detect mismatched artifacts.
    pub fn alphabet_hash(&self) -> String {
        alphabet_hash(&self.alphabet_order)
    }

    /// Min-max normalized reward of a complete trace.
    pub fn normalize_reward(&self, reward: f64) -> f64 {
        if self.constant_reward {
            1.0
        } else {
            (reward - self.r_min) / (self.r_max - self.r_min)
        }
    }
}

pub fn alphabet_hash<S: AsRef<str>>(labels: &[S]) -> String {
    let mut h = Sha256::new();
    for l in labels {
        h.update(l.as_ref().as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Prefix reward component: 0 for proper prefixes, normalized reward otherwise.
pub fn normalized_reward(trace: &Trace, k: usize, stats: &NormalizationStats) -> Result<f64, EncodingError> {
    check_k(trace, k)?;
    Ok(if k < trace.len() {
        0.0
    } else {
        stats.normalize_reward(trace.reward)
    })
}

fn check_k(trace: &Trace, k: usize) -> Result<(), EncodingError> {
    if k == 0 || k > trace.len() {
        return Err(EncodingError::OutOfRangePrefix { k, len: trace.len() });
    }
    Ok(())
}

pub fn encode(trace: &Trace, k: usize, stats: &NormalizationStats) -> Result<PrefixVector, EncodingError> {
    let r = normalized_reward(trace, k, stats)?;
    encode_events(trace.prefix(k), r, stats)
}

/// Encodes an ongoing execution; its reward component is 0.
pub fn encode_ongoing(prefix: &[Event], stats: &NormalizationStats) -> Result<PrefixVector, EncodingError> {
    encode_events(prefix, 0.0, stats)
}

/// Encoding of arbitrary events with an explicit reward component.
///
/// Components are not clipped: prefixes longer than anything seen in training
/// produce frequency or position entries above 1.
pub fn encode_events(
    prefix: &[Event],
    reward_component: f64,
    stats: &NormalizationStats,
) -> Result<PrefixVector, EncodingError> {
    let n = stats.alphabet_order.len();
    let mut freq = vec![0usize; n];
    let mut pos = vec![0usize; n];
    for (i, event) in prefix.iter().enumerate() {
        let a = stats
            .index_of(&event.activity)
            .ok_or_else(|| EncodingError::UnknownActivity(event.activity.clone()))?;
        freq[a] += 1;
        pos[a] = i + 1;
    }
    let mut values = Vec::with_capacity(2 * n + 1);
    values.extend(freq.iter().map(|&f| f as f64 / stats.f_max as f64));
    values.extend(pos.iter().map(|&p| p as f64 / stats.p_max as f64));
    values.push(reward_component);
    Ok(PrefixVector(values))
}

/// Encodings of every prefix (lengths 1..=len) of every trace, in log order.
pub fn encode_log(log: &EventLog, stats: &NormalizationStats) -> Result<Vec<PrefixVector>, EncodingError> {
    let mut out = Vec::with_capacity(log.event_count());
    for trace in log.traces() {
        for k in 1..=trace.len() {
            out.push(encode(trace, k, stats)?);
        }
    }
    Ok(out)
}
