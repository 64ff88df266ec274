mod support;

use std::time::Instant;

use prescriptor::clustering::{fit, KMeansConfig};
use prescriptor::encoding::{encode_log, fit_stats};
use prescriptor::mdp::{build, validate, BuildOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn mined_mdps_match_brute_force_enumeration() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for round in 0..200 {
        let log = support::random_mini_log(&mut rng);
        let stats = fit_stats(&log).unwrap();
        let vectors = encode_log(&log, &stats).unwrap();
        let mut distinct: Vec<Vec<u64>> = vectors
            .iter()
            .map(|v| v.as_slice().iter().map(|x| x.to_bits()).collect())
            .collect();
        distinct.sort();
        distinct.dedup();
        let k = rng.random_range(1..=3).min(distinct.len());
        let cfg = KMeansConfig {
            k,
            seed: round,
            ..KMeansConfig::default()
        };
        let km = fit(&vectors, &cfg).unwrap();
        let mdp = build(&log, &km, &stats, &BuildOptions::default()).unwrap();
        let oracle = support::oracle_mdp(&log, &km);

        let states: std::collections::BTreeSet<String> = mdp.states().iter().map(|s| s.key()).collect();
        assert_eq!(states, oracle.states, "round {round}");
        assert_eq!(mdp.edges().len(), oracle.edges.len(), "round {round}");
        for e in mdp.edges() {
            let key = (e.source.key(), e.action.clone(), e.target.key());
            let (n, p, r) = oracle.edges[&key];
            assert_eq!(e.count, n, "round {round} {key:?}");
            assert!((e.probability - p).abs() <= 1e-12, "round {round} {key:?}");
            assert!((e.reward - r).abs() <= 1e-9, "round {round} {key:?}");
        }
        let ends: std::collections::BTreeMap<String, u64> =
            mdp.terminations().iter().map(|(s, n)| (s.key(), *n)).collect();
        assert_eq!(ends, oracle.terminations, "round {round}");

        let report = validate(&mdp);
        assert!(report.is_ok(), "round {round}: {:?}", report.violations);
    }
    assert!(started.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn transition_probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let log = support::random_mini_log(&mut rng);
        let stats = fit_stats(&log).unwrap();
        let vectors = encode_log(&log, &stats).unwrap();
        let km = fit(
            &vectors,
            &KMeansConfig {
                k: 1,
                ..KMeansConfig::default()
            },
        )
        .unwrap();
        let mdp = build(&log, &km, &stats, &BuildOptions::default()).unwrap();
        for s in mdp.states() {
            for (a, _) in mdp.actions_at(s) {
                let sum: f64 = mdp
                    .outgoing(s)
                    .iter()
                    .filter(|e| e.action == a)
                    .map(|e| e.probability)
                    .sum();
                assert!((sum - 1.0).abs() <= 1e-12, "{s} {a}: {sum}");
            }
        }
    }
}
