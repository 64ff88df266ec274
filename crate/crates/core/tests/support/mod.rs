//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use prescriptor::clustering::KMeansModel;
use prescriptor::eventlog::{EventLog, Trace};
use prescriptor::mdp::{ClusterTag, Mdp, MdpBuilder, State};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

pub const LABELS: [&str; 4] = ["a", "b", "c", "d"];

/// ≤ 5 traces over ≤ 4 activities, integer rewards.
pub fn random_mini_log<R: Rng>(rng: &mut R) -> EventLog {
    let n_acts = rng.random_range(1..=4);
    let acts = &LABELS[..n_acts];
    let n_traces = rng.random_range(1..=5);
    let traces: Vec<Trace> = (0..n_traces)
        .map(|i| {
            let len = rng.random_range(1..=6);
            let seq: Vec<&str> = (0..len).map(|_| *acts.choose(rng).unwrap()).collect();
            let mut t = Trace::from_activities(format!("t{i}"), &seq);
            t.reward = rng.random_range(-20..=20) as f64;
            t
        })
        .collect();
    let agents: Vec<&str> = acts.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
    EventLog::new(traces, agents)
}

/// Brute-force MDP from prefix enumeration, keyed by state strings.
#[derive(Debug, Default)]
pub struct OracleMdp {
    pub states: BTreeSet<String>,
    /// (source, action, target) → (count, probability, mean reward)
    pub edges: BTreeMap<(String, String, String), (u64, f64, f64)>,
    pub terminations: BTreeMap<String, u64>,
}

/// Cluster of the proper prefix `acts[..j]` (j ≥ 1), encoded from scratch.
fn oracle_cluster(acts: &[&str], j: usize, alphabet: &[String], f_max: f64, p_max: f64, km: &KMeansModel) -> usize {
    let mut v = Vec::with_capacity(2 * alphabet.len() + 1);
    for a in alphabet {
        v.push(acts[..j].iter().filter(|x| **x == a.as_str()).count() as f64 / f_max);
    }
    for a in alphabet {
        let last = (0..j).rev().find(|&i| acts[i] == a.as_str()).map_or(0, |i| i + 1);
        v.push(last as f64 / p_max);
    }
    v.push(0.0);
    let mut best = (f64::INFINITY, 0);
    for (c, centroid) in km.centroids.iter().enumerate() {
        let d: f64 = centroid.iter().zip(&v).map(|(x, y)| (x - y) * (x - y)).sum();
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

pub fn oracle_mdp(log: &EventLog, km: &KMeansModel) -> OracleMdp {
    let mut alphabet: Vec<String> = log
        .traces()
        .iter()
        .flat_map(|t| t.activities().map(String::from))
        .collect();
    alphabet.extend(log.agent_activities().iter().cloned());
    alphabet.sort();
    alphabet.dedup();
    let f_max = log
        .traces()
        .iter()
        .flat_map(|t| alphabet.iter().map(move |a| t.activities().filter(|x| x == a).count()))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let p_max = log.traces().iter().map(|t| t.len()).max().unwrap_or(1).max(1) as f64;

    let mut out = OracleMdp::default();
    out.states.insert("START".into());
    let mut counts: BTreeMap<(String, String, String), (u64, f64, u64)> = BTreeMap::new();
    for t in log.traces() {
        let acts: Vec<&str> = t.activities().collect();
        let key = |k: usize| -> String {
            if k == 0 {
                "START".into()
            } else if k == 1 {
                format!("{}@START", acts[0])
            } else {
                format!(
                    "{}@{}",
                    acts[k - 1],
                    oracle_cluster(&acts, k - 1, &alphabet, f_max, p_max, km)
                )
            }
        };
        for k in 1..=acts.len() {
            let (s, s2) = (key(k - 1), key(k));
            out.states.insert(s.clone());
            out.states.insert(s2.clone());
            let e = counts.entry((s, acts[k - 1].to_string(), s2)).or_default();
            e.0 += 1;
            e.1 += if k == acts.len() { t.reward } else { 0.0 };
            e.2 += 1;
        }
        *out.terminations.entry(key(acts.len())).or_default() += 1;
    }
    let mut totals: BTreeMap<(String, String), u64> = BTreeMap::new();
    for ((s, a, _), (n, _, _)) in &counts {
        *totals.entry((s.clone(), a.clone())).or_default() += n;
    }
    for ((s, a, t), (n, rsum, samples)) in counts {
        let total = totals[&(s.clone(), a.clone())];
        out.edges
            .insert((s, a, t), (n, n as f64 / total as f64, rsum / samples as f64));
    }
    out
}

/// Random DAG MDP with ≤ `max_states` states and ≤ 4 agent actions.
pub fn random_dag_mdp<R: Rng>(rng: &mut R, max_states: usize) -> Mdp {
    let n = rng.random_range(4..=max_states);
    let state = |i: usize| {
        if i == 0 {
            State::Start
        } else {
            State::node(format!("x{i}"), ClusterTag::Id(i))
        }
    };
    let mut mb = MdpBuilder::new();
    // the last few states are terminal
    let n_terminal = rng.random_range(1..=3.min(n - 1));
    for i in 0..n - n_terminal {
        let kind: f64 = if i == 0 { 0.5 } else { rng.random() };
        let n_agent = if kind < 0.3 { 0 } else { rng.random_range(1..=4) };
        let n_env = if !(0.3..=0.8).contains(&kind) {
            rng.random_range(1..=2)
        } else {
            0
        };
        let labels = (0..n_agent)
            .map(|j| format!("a{j}"))
            .chain((0..n_env).map(|j| format!("e{j}")));
        for label in labels {
            let n_targets = rng.random_range(1..=3);
            for _ in 0..n_targets {
                let t = rng.random_range(i + 1..n);
                let count = rng.random_range(1..=20);
                let reward = rng.random_range(-10.0..10.0);
                mb.edge(&state(i), &label, &state(t), count, reward);
            }
        }
        if n_env > 0 && rng.random_bool(0.3) {
            mb.terminate(&state(i), rng.random_range(1..=10));
        }
    }
    for i in n - n_terminal..n {
        mb.terminate(&state(i), rng.random_range(1..=10));
    }
    mb.finish(["a0", "a1", "a2", "a3"], 0.99)
}

/// Optimal values under the sampling semantics of training: at each state
/// the environment moves with its share of the recorded traversals
/// (including trace endings), the agent otherwise.
pub struct ValueIteration {
    pub v: BTreeMap<State, f64>,
    pub q: BTreeMap<(State, String), f64>,
}

struct Split<'a> {
    env: Vec<(&'a str, u64)>,
    agent: Vec<(&'a str, u64)>,
    ends: u64,
}

fn split<'a>(mdp: &'a Mdp, s: &State) -> Split<'a> {
    let mut env = Vec::new();
    let mut agent = Vec::new();
    for (a, n) in mdp.actions_at(s) {
        if mdp.is_agent(a) {
            agent.push((a, n));
        } else {
            env.push((a, n));
        }
    }
    Split {
        env,
        agent,
        ends: mdp.termination_count(s),
    }
}

fn action_value(mdp: &Mdp, s: &State, a: &str, gamma: f64, v: &BTreeMap<State, f64>) -> f64 {
    mdp.outgoing(s)
        .iter()
        .filter(|e| e.action == a)
        .map(|e| e.probability * (e.reward + gamma * v[&e.target]))
        .sum()
}

pub fn value_iteration(mdp: &Mdp, gamma: f64) -> ValueIteration {
    solve(mdp, gamma, None)
}

/// Exact value of a fixed policy under the same semantics.
pub fn policy_value(mdp: &Mdp, gamma: f64, policy: &prescriptor::rl::Policy) -> BTreeMap<State, f64> {
    solve(mdp, gamma, Some(policy)).v
}

fn solve(mdp: &Mdp, gamma: f64, policy: Option<&prescriptor::rl::Policy>) -> ValueIteration {
    let mut v: BTreeMap<State, f64> = mdp.states().iter().map(|s| (s.clone(), 0.0)).collect();
    for _ in 0..100_000 {
        let mut delta: f64 = 0.0;
        let mut next = v.clone();
        for s in mdp.states() {
            let sp = split(mdp, s);
            let env_total: u64 = sp.env.iter().map(|x| x.1).sum::<u64>() + sp.ends;
            let agent_total: u64 = sp.agent.iter().map(|x| x.1).sum();
            let total = env_total + agent_total;
            if total == 0 {
                next.insert(s.clone(), 0.0);
                continue;
            }
            let env_part: f64 = sp
                .env
                .iter()
                .map(|(a, n)| *n as f64 / env_total.max(1) as f64 * action_value(mdp, s, a, gamma, &v))
                .sum();
            let best = match policy.and_then(|p| p.action(s)) {
                Some(a) => action_value(mdp, s, a, gamma, &v),
                None => sp
                    .agent
                    .iter()
                    .map(|(a, _)| action_value(mdp, s, a, gamma, &v))
                    .fold(f64::NEG_INFINITY, f64::max),
            };
            let value = if agent_total == 0 {
                env_part
            } else {
                (env_total as f64 * env_part + agent_total as f64 * best) / total as f64
            };
            delta = delta.max((value - v[s]).abs());
            next.insert(s.clone(), value);
        }
        v = next;
        if delta < 1e-12 {
            break;
        }
    }
    let mut q = BTreeMap::new();
    for s in mdp.states() {
        for (a, _) in mdp.agent_actions_at(s) {
            q.insert((s.clone(), a.to_string()), action_value(mdp, s, a, gamma, &v));
        }
    }
    ValueIteration { v, q }
}

impl ValueIteration {
    /// Agent actions within `tol` of the best q*(s, ·).
    pub fn optimal_set(&self, mdp: &Mdp, s: &State, tol: f64) -> BTreeSet<String> {
        let qs: Vec<(String, f64)> = mdp
            .agent_actions_at(s)
            .into_iter()
            .map(|(a, _)| (a.to_string(), self.q[&(s.clone(), a.to_string())]))
            .collect();
        let best = qs.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        qs.into_iter().filter(|x| x.1 >= best - tol).map(|x| x.0).collect()
    }

    /// Probability of visiting each state from START when the agent plays an
    /// optimal action (acyclic MDPs).
    pub fn visit_probabilities(&self, mdp: &Mdp) -> BTreeMap<State, f64> {
        let order = topological(mdp);
        let mut p: BTreeMap<State, f64> = mdp.states().iter().map(|s| (s.clone(), 0.0)).collect();
        p.insert(State::Start, 1.0);
        for s in order {
            let mass = p[&s];
            if mass == 0.0 {
                continue;
            }
            let sp = split(mdp, &s);
            let env_total: u64 = sp.env.iter().map(|x| x.1).sum::<u64>() + sp.ends;
            let agent_total: u64 = sp.agent.iter().map(|x| x.1).sum();
            let total = (env_total + agent_total) as f64;
            if total == 0.0 {
                continue;
            }
            for (a, n) in &sp.env {
                for e in mdp.outgoing(&s).iter().filter(|e| e.action == *a) {
                    *p.get_mut(&e.target).unwrap() += mass * (*n as f64 / total) * e.probability;
                }
            }
            if agent_total > 0 {
                let best = self.optimal_set(mdp, &s, 0.0).into_iter().next().unwrap();
                for e in mdp.outgoing(&s).iter().filter(|e| e.action == best) {
                    *p.get_mut(&e.target).unwrap() += mass * (agent_total as f64 / total) * e.probability;
                }
            }
        }
        p
    }
}

fn topological(mdp: &Mdp) -> Vec<State> {
    let mut indeg: BTreeMap<&State, usize> = mdp.states().iter().map(|s| (s, 0)).collect();
    for e in mdp.edges() {
        *indeg.get_mut(&e.target).unwrap() += 1;
    }
    let mut ready: Vec<&State> = indeg.iter().filter(|(_, d)| **d == 0).map(|(s, _)| *s).collect();
    let mut out = Vec::new();
    while let Some(s) = ready.pop() {
        out.push(s.clone());
        for e in mdp.outgoing(s) {
            let d = indeg.get_mut(&e.target).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(&e.target);
            }
        }
    }
    assert_eq!(out.len(), mdp.states().len(), "MDP has a cycle");
    out
}

/// The 1-decision MDP: `a` (reward 10, n = 100) against `b` (reward 12, n = 2).
pub fn overfit_mdp() -> Mdp {
    let a = State::node("a", ClusterTag::Start);
    let b = State::node("b", ClusterTag::Start);
    let mut mb = MdpBuilder::new();
    mb.edge(&State::Start, "a", &a, 100, 10.0)
        .edge(&State::Start, "b", &b, 2, 12.0)
        .terminate(&a, 100)
        .terminate(&b, 2);
    mb.finish(["a", "b"], 0.99)
}

/// Actions whose optimal value is within this of the best count as optimal.
pub const ARGMAX_TOLERANCE: f64 = 1e-6;
pub const REACH_THRESHOLD: f64 = 0.01;

/// Training setup for the optimality oracle: ε decays fast to 0.01 so that
/// late, near-greedy episodes dominate the estimates.
pub fn oracle_train_config(seed: u64) -> prescriptor::rl::TrainConfig {
    prescriptor::rl::TrainConfig {
        episodes: 1_000_000,
        gamma: 0.99,
        epsilon_end: 0.01,
        epsilon_decay: Some(0.999),
        alpha: 0.01,
        seed,
        ..Default::default()
    }
}

/// Decision states reachable with probability ≥ [`REACH_THRESHOLD`] whose
/// policy action is not optimal.
pub fn policy_mismatches(mdp: &Mdp, vi: &ValueIteration, policy: &prescriptor::rl::Policy) -> Vec<String> {
    let reach = vi.visit_probabilities(mdp);
    let mut out = Vec::new();
    for s in mdp.decision_states() {
        if reach[s] < REACH_THRESHOLD {
            continue;
        }
        let best = vi.optimal_set(mdp, s, ARGMAX_TOLERANCE);
        let chosen = policy.action(s).unwrap_or("<none>");
        if !best.contains(chosen) {
            let qs: Vec<String> = mdp
                .agent_actions_at(s)
                .iter()
                .map(|(a, n)| format!("{a}={:.4} (n={n})", vi.q[&(s.clone(), a.to_string())]))
                .collect();
            out.push(format!(
                "{s} (reach {:.3}) chose {chosen}; q* {}",
                reach[s],
                qs.join(", ")
            ));
        }
    }
    out
}

/// The 50 MDPs of the optimality oracle.
pub fn oracle_mdps() -> Vec<Mdp> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    (0..50).map(|_| random_dag_mdp(&mut rng, 20)).collect()
}

/// A generated log, split, mined and trained under every standard scaling.
pub struct Fixture {
    pub train: EventLog,
    pub test: EventLog,
    pub mined: prescriptor::pipeline::Mined,
    pub policies: Vec<(String, prescriptor::rl::Policy, prescriptor::rl::QTable)>,
}

impl Fixture {
    pub fn new(preset: &str, n_traces: usize, k: usize, episodes: u64, seed: u64) -> Fixture {
        use prescriptor::eventlog::{split, SplitOptions};
        use prescriptor::rl::{mc_policy_iteration, ScalingSpec, TrainConfig};

        let model = prescriptor::simgen::ProcessModel::preset(preset).unwrap();
        let log = prescriptor::simgen::generate_log(&model, n_traces, seed).unwrap();
        let (train, test) = split(
            &log,
            &SplitOptions {
                train_fraction: 0.8,
                seed,
                exclude_undecidable_test: false,
            },
        )
        .unwrap();
        let km = prescriptor::KMeansConfig {
            k,
            seed,
            ..Default::default()
        };
        let mined = prescriptor::pipeline::mine(&train, &km, &prescriptor::BuildOptions::default()).unwrap();
        let cfg = TrainConfig {
            episodes,
            seed,
            ..Default::default()
        };
        let policies = ScalingSpec::standard_set()
            .into_iter()
            .map(|spec| {
                let h = spec.fit(&mined.mdp);
                let (p, q) = mc_policy_iteration(&mined.mdp, &h, &cfg).unwrap();
                (spec.name().to_string(), p, q)
            })
            .collect();
        Fixture {
            train,
            test,
            mined,
            policies,
        }
    }

    pub fn recommender(&self, i: usize) -> prescriptor::Recommender<'_> {
        let (_, p, q) = &self.policies[i];
        prescriptor::Recommender::new(p, q, &self.mined.mdp, &self.mined.kmeans, &self.mined.stats)
    }
}
