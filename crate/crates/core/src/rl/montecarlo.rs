use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dynamics::Mover;
use super::{greedy_index, prepare, provenance, Algorithm, Policy, QTable, RlError, ScalingFn, TrainConfig};
use crate::mdp::Mdp;

/// Monte Carlo control: episodes from START, ε-greedy over q̃ at agent
/// turns, every-visit incremental means of the discounted return.
pub fn mc_policy_iteration(mdp: &Mdp, scaling: &ScalingFn, cfg: &TrainConfig) -> Result<(Policy, QTable), RlError> {
    let dynamics = prepare(mdp, cfg)?;
    let h: Vec<f64> = dynamics
        .pairs
        .iter()
        .map(|&(s, j)| scaling.h_value(dynamics.nodes[s].agent[j].n))
        .collect();
    let mut q = vec![0.0; dynamics.pairs.len()];
    let mut visits = vec![0u64; dynamics.pairs.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let decay = cfg.decay();
    let mut steps: Vec<(Option<usize>, f64)> = Vec::with_capacity(cfg.max_episode_len);

    for episode in 0..cfg.episodes {
        let eps = cfg.epsilon(episode, decay);
        steps.clear();
        let mut s = dynamics.start;
        while steps.len() < cfg.max_episode_len {
            match dynamics.who_moves(s, &mut rng) {
                Mover::Stop => break,
                Mover::Env => match dynamics.env_step(s, &mut rng) {
                    None => break,
                    Some((t, r)) => {
                        steps.push((None, r));
                        s = t;
                    }
                },
                Mover::Agent => {
                    let node = &dynamics.nodes[s];
                    let j = if rng.random::<f64>() < eps {
                        rng.random_range(0..node.agent.len())
                    } else {
                        greedy_index(node, &q, &h)
                    };
                    let (t, r) = dynamics.agent_step(s, j, &mut rng);
                    steps.push((Some(node.pair0 + j), r));
                    s = t;
                }
            }
        }
        let mut g = 0.0;
        for &(pair, r) in steps.iter().rev() {
            g = r + cfg.gamma * g;
            if let Some(p) = pair {
                visits[p] += 1;
                q[p] += (g - q[p]) / visits[p] as f64;
            }
        }
    }

    let table = QTable::from_arrays(mdp, &dynamics, &q, &visits, cfg.gamma);
    let policy = Policy::extract(&table, *scaling, mdp, provenance(mdp, cfg, Algorithm::MonteCarlo));
    Ok((policy, table))
}
