use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dynamics::Mover;
use super::{greedy_index, prepare, provenance, Algorithm, Policy, QTable, RlError, ScalingFn, TrainConfig};
use crate::mdp::Mdp;

/// Tabular Q-learning with target r + γ max Q(s′, ·).
///
/// Environment moves between two agent decisions are folded into the target:
/// their rewards are accumulated with the per-step discount and the bootstrap
/// is discounted by γ^τ, τ being the number of steps in between.
pub fn q_learning(mdp: &Mdp, cfg: &TrainConfig) -> Result<(Policy, QTable), RlError> {
    let dynamics = prepare(mdp, cfg)?;
    let ones = vec![1.0; dynamics.pairs.len()];
    let mut q = vec![0.0; dynamics.pairs.len()];
    let mut visits = vec![0u64; dynamics.pairs.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let decay = cfg.decay();

    let update = |q: &mut [f64], visits: &mut [u64], p: usize, target: f64| {
        visits[p] += 1;
        q[p] += cfg.alpha * (target - q[p]);
    };

    for episode in 0..cfg.episodes {
        let eps = cfg.epsilon(episode, decay);
        let mut s = dynamics.start;
        // (pair, accumulated reward, discount for the next reward)
        let mut pending: Option<(usize, f64, f64)> = None;
        let mut ended = false;
        for _ in 0..cfg.max_episode_len {
            match dynamics.who_moves(s, &mut rng) {
                Mover::Stop => {
                    ended = true;
                    break;
                }
                Mover::Env => match dynamics.env_step(s, &mut rng) {
                    None => {
                        ended = true;
                        break;
                    }
                    Some((t, r)) => {
                        if let Some((_, acc, disc)) = pending.as_mut() {
                            *acc += *disc * r;
                            *disc *= cfg.gamma;
                        }
                        s = t;
                    }
                },
                Mover::Agent => {
                    let node = &dynamics.nodes[s];
                    if let Some((p, acc, disc)) = pending.take() {
                        let best = greedy_index(node, &q, &ones);
                        let target = acc + disc * q[node.pair0 + best];
                        update(&mut q, &mut visits, p, target);
                    }
                    let j = if rng.random::<f64>() < eps {
                        rng.random_range(0..node.agent.len())
                    } else {
                        greedy_index(node, &q, &ones)
                    };
                    let (t, r) = dynamics.agent_step(s, j, &mut rng);
                    pending = Some((node.pair0 + j, r, cfg.gamma));
                    s = t;
                }
            }
        }
        // a truncated episode has no bootstrap target; its last update is dropped
        if ended {
            if let Some((p, acc, _)) = pending {
                update(&mut q, &mut visits, p, acc);
            }
        }
    }

    let table = QTable::from_arrays(mdp, &dynamics, &q, &visits, cfg.gamma);
    let policy = Policy::extract(&table, ScalingFn::H0, mdp, provenance(mdp, cfg, Algorithm::QLearning));
    Ok((policy, table))
}
