use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal};
use serde::{Deserialize, Serialize};

use super::model::{softmax, Branch, Features, Gateway, ProcessModel};
use crate::eventlog::{AttrValue, Event, Trace};

const MILLIS_PER_HOUR: f64 = 3_600_000.0;
/// 2024-01-01T00:00:00Z; first case arrival.
const EPOCH_MS: i64 = 1_704_067_200_000;

/// What the agent does at one of its turns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Choice {
    Act(String),
    /// No opinion; the model's own agent behaviour decides.
    Abstain,
}

/// Chooses agent activities during a simulated case.
pub trait AgentController: Sync {
    /// `allowed` lists the activities the model permits at this turn. A
    /// choice outside it aborts the case.
    fn choose(&self, prefix: &[Event], allowed: &[&str]) -> Choice;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ending {
    Completed,
    /// The agent chose an activity the model does not allow.
    Exception,
    /// The environment stopped responding to the agent.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct CaseRun {
    pub trace: Trace,
    pub ending: Ending,
    pub abstentions: u32,
}

/// Per-case generator, independent of how cases are scheduled.
pub(crate) fn case_rng(seed: u64, case: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(case);
    rng
}

struct Walk<'m> {
    model: &'m ProcessModel,
    rng: ChaCha8Rng,
    events: Vec<Event>,
    features: Features,
    amount: f64,
    clock: f64,
}

impl Walk<'_> {
    fn emit(&mut self, activity: &str) {
        let spec = &self.model.activities[activity];
        let d = spec.duration;
        let hours = if d.mean_hours == 0.0 {
            0.0
        } else {
            let shape = 1.0 / (d.cv * d.cv);
            Gamma::new(shape, d.mean_hours / shape)
                .expect("validated duration")
                .sample(&mut self.rng)
        };
        let hours = (hours * 1000.0).round() / 1000.0;
        let mut e = Event::new(activity, self.clock.round() as i64)
            .with_attr("duration", AttrValue::Number(hours))
            .with_attr("amount", AttrValue::Number(self.amount));
        e.owner = spec.owner;
        self.events.push(e);
        let gap = if self.model.gap_hours > 0.0 {
            Exp::new(1.0 / self.model.gap_hours)
                .expect("positive rate")
                .sample(&mut self.rng)
        } else {
            0.0
        };
        self.clock += (hours + gap) * MILLIS_PER_HOUR;
        let f = &self.model.features;
        if activity == f.offers_activity {
            self.features.offers += 1;
        }
        if activity == f.calls_activity {
            self.features.calls += 1;
        }
    }

    fn pick(&mut self, probs: &[f64]) -> usize {
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }

    fn scores(&self, options: &[Branch]) -> Vec<f64> {
        options.iter().map(|b| b.logit.score(&self.features)).collect()
    }
}

/// Walks one case through the model. Without a controller the model's own
/// agent behaviour is used, which is how logs are generated.
pub fn run_case(model: &ProcessModel, seed: u64, case: u64, controller: Option<&dyn AgentController>) -> CaseRun {
    let mut rng = case_rng(seed, case);
    let a = model.amount;
    let mut amount = LogNormal::new(a.mu, a.sigma)
        .expect("validated amount")
        .sample(&mut rng);
    if a.round_to > 0.0 {
        amount = (amount / a.round_to).round() * a.round_to;
    }
    amount = amount.clamp(a.min, a.max);
    let clock = EPOCH_MS as f64 + case as f64 * model.interarrival_hours * MILLIS_PER_HOUR;
    let mut w = Walk {
        model,
        rng,
        events: Vec::new(),
        features: Features {
            amount: amount / model.features.amount_scale,
            offers: 0,
            calls: 0,
        },
        amount,
        clock,
    };

    let mut node = model.start.as_str();
    let mut unanswered = 0usize;
    let mut abstentions = 0u32;
    let ending = loop {
        if w.events.len() >= model.max_events {
            break Ending::Stalled;
        }
        let agent_options: &[Branch] = match model.gateway(node) {
            Gateway::End => break Ending::Completed,
            Gateway::Chance { options } => {
                let i = w.pick(&softmax(&w.scores(options), false));
                w.emit(&options[i].activity);
                unanswered = 0;
                node = &options[i].next;
                continue;
            }
            Gateway::Preaccept { accept, reject } => {
                let b = if w.rng.random::<f64>() < model.preaccept_probability {
                    accept
                } else {
                    reject
                };
                w.emit(&b.activity);
                unanswered = 0;
                node = &b.next;
                continue;
            }
            Gateway::Mixed { environment, agent } => {
                let probs = softmax(&w.scores(environment), true);
                let i = w.pick(&probs);
                if i < environment.len() {
                    w.emit(&environment[i].activity);
                    unanswered = 0;
                    node = &environment[i].next;
                    continue;
                }
                agent
            }
            Gateway::Agent { options } => options,
        };

        if unanswered >= model.stall_limit {
            break Ending::Stalled;
        }
        let choice = match controller {
            Some(c) => {
                let allowed: Vec<&str> = agent_options.iter().map(|b| b.activity.as_str()).collect();
                c.choose(&w.events, &allowed)
            }
            None => Choice::Abstain,
        };
        let branch = match choice {
            Choice::Act(a) => match agent_options.iter().find(|b| b.activity == a) {
                Some(b) => b,
                None => break Ending::Exception,
            },
            Choice::Abstain => {
                if controller.is_some() {
                    abstentions += 1;
                }
                let i = w.pick(&softmax(&w.scores(agent_options), false));
                &agent_options[i]
            }
        };
        w.emit(&branch.activity);
        unanswered += 1;
        node = &branch.next;
    };

    let mut trace = Trace::new(format!("case_{case:06}"), w.events);
    trace.reward = model
        .kpi
        .reward(&trace)
        .expect("generated traces carry the amount attribute");
    CaseRun {
        trace,
        ending,
        abstentions,
    }
}

/// Replays `trace` against the model's control flow; returns the first
/// position (1-based) that no gateway allows, if any.
pub fn check_trace(model: &ProcessModel, trace: &Trace) -> Result<(), usize> {
    let mut node = model.start.as_str();
    for (i, e) in trace.events.iter().enumerate() {
        let (env, agent) = super::model::branches(model.gateway(node));
        match env.iter().chain(&agent).find(|b| b.activity == e.activity) {
            Some(b) => node = &b.next,
            None => return Err(i + 1),
        }
    }
    match model.gateway(node) {
        Gateway::End => Ok(()),
        _ => Err(trace.len() + 1),
    }
}
