//! Test-log analyses and statistical comparison of policies.
//!
//! A test trace complies with a policy when every agent event in it is the
//! policy's recommendation at the state reached just before. States unknown
//! to the MDP count as violations. Compliance only depends on the activity
//! sequence.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::eventlog::{EventLog, Owner, Trace};
use crate::recommender::Recommender;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("policy {0} has fewer than 2 samples")]
    InsufficientSamples(String),
}

/// Mean and count of a sample; the mean is absent for an empty sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub count: usize,
}

impl Summary {
    /// Sums in iteration order.
    pub fn of<I: IntoIterator<Item = f64>>(xs: I) -> Self {
        let (sum, count) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        Summary {
            mean: (count > 0).then(|| sum / count as f64),
            count,
        }
    }
}

/// 1-based positions of the agent events where `trace` departs from the policy.
pub fn violations(trace: &Trace, rec: &Recommender<'_>) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, e) in trace.events.iter().enumerate() {
        if e.owner != Owner::Agent {
            continue;
        }
        let ok = rec
            .state_of(&trace.events[..i])
            .ok()
            .and_then(|s| rec.policy.action(&s).map(|a| a == e.activity))
            .unwrap_or(false);
        if !ok {
            out.push(i + 1);
        }
    }
    out
}

pub fn is_compliant(trace: &Trace, rec: &Recommender<'_>) -> bool {
    violations(trace, rec).is_empty()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalTraceSection {
    pub policy: String,
    /// KPI of the policy-compliant test traces.
    pub compliant: Summary,
    /// KPI of the whole test log.
    pub log: Summary,
    /// No compliant trace exists.
    pub no_data: bool,
}

pub fn optimal_trace_analysis(test_log: &EventLog, name: &str, rec: &Recommender<'_>) -> OptimalTraceSection {
    let compliant = Summary::of(
        test_log
            .traces()
            .iter()
            .filter(|t| is_compliant(t, rec))
            .map(|t| t.reward),
    );
    OptimalTraceSection {
        policy: name.to_string(),
        no_data: compliant.count == 0,
        compliant,
        log: Summary::of(test_log.traces().iter().map(|t| t.reward)),
    }
}

/// Prefix-gain aggregate at one prefix length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixGainRow {
    pub k: usize,
    /// Test prefixes of this length.
    pub prefixes: usize,
    /// Prefixes with at least one compliant continuation.
    pub estimated: usize,
    /// Mean over estimated prefixes of the estimated KPI.
    pub mean_estimate: Option<f64>,
    /// Mean over estimated prefixes of their own trace's KPI.
    pub mean_ground_truth: Option<f64>,
    pub mean_gain: Option<f64>,
    pub no_estimate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixGainSection {
    pub policy: String,
    pub rows: Vec<PrefixGainRow>,
    /// KPI of the distinct traces that serve as continuations of complete
    /// prefixes of compliant traces.
    pub pooled_full_length: Summary,
}

/// For each prefix σ_k of each test trace σ: the estimate is the mean KPI of
/// the test traces τ with the same first k activities that comply with the
/// policy after position k. A complete prefix (k = |σ|) only matches traces
/// of length k, and a proper prefix only traces longer than k.
pub fn prefix_gain_analysis(test_log: &EventLog, name: &str, rec: &Recommender<'_>) -> PrefixGainSection {
    let traces = test_log.traces();
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let seqs: Vec<Vec<u32>> = traces
        .iter()
        .map(|t| {
            t.activities()
                .map(|a| {
                    let next = ids.len() as u32;
                    *ids.entry(a).or_insert(next)
                })
                .collect()
        })
        .collect();
    let last_violation: Vec<usize> = traces
        .iter()
        .map(|t| violations(t, rec).last().copied().unwrap_or(0))
        .collect();
    let compliant: Vec<bool> = last_violation.iter().map(|&v| v == 0).collect();
    let max_len = seqs.iter().map(Vec::len).max().unwrap_or(0);

    let mut rows = Vec::with_capacity(max_len);
    let mut pooled: BTreeSet<usize> = BTreeSet::new();
    for k in 1..=max_len {
        // (prefix, complete) → trace indices, in log order
        let mut groups: HashMap<(&[u32], bool), Vec<usize>> = HashMap::new();
        for (i, s) in seqs.iter().enumerate() {
            if s.len() >= k {
                groups.entry((&s[..k], s.len() == k)).or_default().push(i);
            }
        }
        let (mut prefixes, mut est_sum, mut truth_sum, mut gain_sum, mut estimated) = (0, 0.0, 0.0, 0.0, 0);
        for (i, s) in seqs.iter().enumerate() {
            if s.len() < k {
                continue;
            }
            prefixes += 1;
            let matches: Vec<usize> = groups[&(&s[..k], s.len() == k)]
                .iter()
                .copied()
                .filter(|&j| last_violation[j] <= k)
                .collect();
            let Some(estimate) = Summary::of(matches.iter().map(|&j| traces[j].reward)).mean else {
                continue;
            };
            if s.len() == k && compliant[i] {
                pooled.extend(&matches);
            }
            estimated += 1;
            est_sum += estimate;
            truth_sum += traces[i].reward;
            gain_sum += estimate - traces[i].reward;
        }
        let per = |sum: f64| (estimated > 0).then(|| sum / estimated as f64);
        rows.push(PrefixGainRow {
            k,
            prefixes,
            estimated,
            mean_estimate: per(est_sum),
            mean_ground_truth: per(truth_sum),
            mean_gain: per(gain_sum),
            no_estimate: estimated == 0,
        });
    }
    PrefixGainSection {
        policy: name.to_string(),
        rows,
        pooled_full_length: Summary::of(pooled.iter().map(|&j| traces[j].reward)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub policy_a: String,
    pub policy_b: String,
    /// mean(a) − mean(b)
    pub mean_difference: f64,
    pub p_value: f64,
    pub significant: bool,
    /// Both samples have zero variance; the p-value is 1 for equal means and
    /// 0 otherwise.
    pub degenerate: bool,
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Welch's unequal-variance two-sample t-test, two-sided.
pub fn welch_test(a: &[f64], b: &[f64]) -> (f64, f64, bool) {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let diff = ma - mb;
    let (qa, qb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = qa + qb;
    if se2 == 0.0 {
        return (diff, if diff == 0.0 { 1.0 } else { 0.0 }, true);
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (a.len() as f64 - 1.0) + qb * qb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    (diff, p, false)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch tests for every ordered pair of distinct policies.
pub fn compare_policies(samples: &[(String, Vec<f64>)]) -> Result<Vec<PairwiseTest>, EvalError> {
    if let Some((name, _)) = samples.iter().find(|(_, xs)| xs.len() < 2) {
        return Err(EvalError::InsufficientSamples(name.clone()));
    }
    let mut out = Vec::new();
    for (na, a) in samples {
        for (nb, b) in samples {
            if na == nb {
                continue;
            }
            let (mean_difference, p_value, degenerate) = welch_test(a, b);
            out.push(PairwiseTest {
                policy_a: na.clone(),
                policy_b: nb.clone(),
                mean_difference,
                p_value,
                significant: p_value <= SIGNIFICANCE_LEVEL,
                degenerate,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub optimal_traces: Vec<OptimalTraceSection>,
    pub prefix_gain: Vec<PrefixGainSection>,
    /// Welch tests over the KPIs of each policy's compliant test traces, for
    /// policies with at least two.
    pub pairwise_tests: Vec<PairwiseTest>,
}

/// Runs both test-log analyses for every named policy.
pub fn evaluate_log(test_log: &EventLog, policies: &[(String, Recommender<'_>)]) -> EvalReport {
    let mut optimal_traces = Vec::new();
    let mut prefix_gain = Vec::new();
    let mut samples = Vec::new();
    for (name, rec) in policies {
        optimal_traces.push(optimal_trace_analysis(test_log, name, rec));
        prefix_gain.push(prefix_gain_analysis(test_log, name, rec));
        let kpis: Vec<f64> = test_log
            .traces()
            .iter()
            .filter(|t| is_compliant(t, rec))
            .map(|t| t.reward)
            .collect();
        if kpis.len() >= 2 {
            samples.push((name.clone(), kpis));
        }
    }
    let pairwise_tests = compare_policies(&samples).expect("samples filtered to at least 2");
    EvalReport {
        optimal_traces,
        prefix_gain,
        pairwise_tests,
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `policy_a,policy_b,mean_difference,p_value,significant`
pub fn pairwise_csv(tests: &[PairwiseTest]) -> String {
    let mut out = String::from("policy_a,policy_b,mean_difference,p_value,significant\n");
    for t in tests {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            t.policy_a, t.policy_b, t.mean_difference, t.p_value, t.significant
        );
    }
    out
}

/// Square table of mean differences, row minus column, with p-values.
pub fn pairwise_matrix_csv(names: &[String], tests: &[PairwiseTest]) -> String {
    let mut out = String::from("policy");
    for n in names {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for a in names {
        out.push_str(a);
        for b in names {
            let cell = tests
                .iter()
                .find(|t| &t.policy_a == a && &t.policy_b == b)
                .map(|t| format!("{:.2} (p={:.3})", t.mean_difference, t.p_value))
                .unwrap_or_default();
            let _ = write!(out, ",{cell}");
        }
        out.push('\n');
    }
    out
}

/// `policy,compliant_mean,compliant_count,log_mean,log_count`
pub fn optimal_traces_csv(sections: &[OptimalTraceSection]) -> String {
    let mut out = String::from("policy,compliant_mean,compliant_count,log_mean,log_count\n");
    for s in sections {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.policy,
            fmt_opt(s.compliant.mean),
            s.compliant.count,
            fmt_opt(s.log.mean),
            s.log.count
        );
    }
    out
}

/// `policy,k,mean_gain,estimated,prefixes` for plotting gain against prefix length.
pub fn prefix_gain_csv(sections: &[PrefixGainSection]) -> String {
    let mut out = String::from("policy,k,mean_gain,estimated,prefixes\n");
    for s in sections {
        for r in &s.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.policy,
                r.k,
                fmt_opt(r.mean_gain),
                r.estimated,
                r.prefixes
            );
        }
    }
    out
}
