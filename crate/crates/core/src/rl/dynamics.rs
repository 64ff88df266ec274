//! Index-based view of an [`Mdp`] for fast episode sampling.
//!
//! At every state the recorded traversals split between the agent and the
//! environment (environment actions plus trace endings). An episode step
//! first decides, by those shares, who moves; an environment move then picks
//! an environment action or the end of the trace proportionally to its count.

use rand::Rng;

use crate::mdp::Mdp;

pub(crate) struct ActionOut {
    pub action: String,
    pub n: u64,
    /// (cumulative count, target index, reward)
    pub outcomes: Vec<(u64, usize, f64)>,
}

impl ActionOut {
    fn sample<R: Rng>(&self, rng: &mut R) -> (usize, f64) {
        let u = rng.random_range(0..self.n);
        let i = self.outcomes.partition_point(|o| o.0 <= u);
        let (_, t, r) = self.outcomes[i];
        (t, r)
    }
}

pub(crate) struct Node {
    pub env: Vec<ActionOut>,
    env_cum: Vec<u64>,
    pub terminations: u64,
    pub agent: Vec<ActionOut>,
    /// Global index of the first agent pair at this node.
    pub pair0: usize,
}

impl Node {
    pub fn env_total(&self) -> u64 {
        self.terminations + self.env_cum.last().copied().unwrap_or(0)
    }

    pub fn agent_total(&self) -> u64 {
        self.agent.iter().map(|a| a.n).sum()
    }
}

pub(crate) enum Mover {
    Agent,
    Env,
    Stop,
}

pub(crate) struct Dynamics {
    pub start: usize,
    pub nodes: Vec<Node>,
    /// (node, index into that node's agent actions) per global pair.
    pub pairs: Vec<(usize, usize)>,
}

impl Dynamics {
    pub fn compile(mdp: &Mdp) -> Option<Self> {
        let start = mdp.index_of(&crate::mdp::State::Start)?;
        let mut nodes = Vec::with_capacity(mdp.states().len());
        let mut pairs = Vec::new();
        for (i, s) in mdp.states().iter().enumerate() {
            let mut env: Vec<ActionOut> = Vec::new();
            let mut agent: Vec<ActionOut> = Vec::new();
            for e in mdp.outgoing_at(i) {
                let t = mdp.index_of(&e.target).expect("edge target is a declared state");
                let side = if mdp.is_agent(&e.action) { &mut agent } else { &mut env };
                match side.last_mut() {
                    Some(a) if a.action == e.action => {
                        a.n += e.count;
                        a.outcomes.push((a.n, t, e.reward));
                    }
                    _ => side.push(ActionOut {
                        action: e.action.clone(),
                        n: e.count,
                        outcomes: vec![(e.count, t, e.reward)],
                    }),
                }
            }
            let mut acc = 0;
            let env_cum = env
                .iter()
                .map(|a| {
                    acc += a.n;
                    acc
                })
                .collect();
            let pair0 = pairs.len();
            pairs.extend((0..agent.len()).map(|j| (i, j)));
            nodes.push(Node {
                env,
                env_cum,
                terminations: mdp.termination_count(s),
                agent,
                pair0,
            });
        }
        Some(Dynamics { start, nodes, pairs })
    }

    pub fn who_moves<R: Rng>(&self, s: usize, rng: &mut R) -> Mover {
        let node = &self.nodes[s];
        let (env, agent) = (node.env_total(), node.agent_total());
        match (env, agent) {
            (0, 0) => Mover::Stop,
            (_, 0) => Mover::Env,
            (0, _) => Mover::Agent,
            _ if rng.random_range(0..env + agent) < env => Mover::Env,
            _ => Mover::Agent,
        }
    }

    /// `None` when the environment ends the trace.
    pub fn env_step<R: Rng>(&self, s: usize, rng: &mut R) -> Option<(usize, f64)> {
        let node = &self.nodes[s];
        let u = rng.random_range(0..node.env_total());
        if u < node.terminations {
            return None;
        }
        let u = u - node.terminations;
        let i = node.env_cum.partition_point(|&c| c <= u);
        Some(node.env[i].sample(rng))
    }

    pub fn agent_step<R: Rng>(&self, s: usize, j: usize, rng: &mut R) -> (usize, f64) {
        self.nodes[s].agent[j].sample(rng)
    }
}
