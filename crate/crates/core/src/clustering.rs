//! Weighted Lloyd k-means with k-means++ seeding.
//!
//! Identical input vectors are collapsed into one weighted point before
//! fitting, which is arithmetically the same objective as clustering the full
//! multiset but much cheaper on prefix encodings.

use std::collections::HashMap;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::PrefixVector;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ClusterError {
    #[error("no vectors to cluster")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {distinct} distinct vectors")]
    KTooLarge { k: usize, distinct: usize },
    #[error("vector has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("silhouette needs at least two populated clusters")]
    SingleCluster,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    /// Give each distinct vector weight 1 instead of its multiplicity.
    pub deduplicate: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 100,
            seed: 0,
            max_iter: 300,
            tol: 1e-4,
            deduplicate: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    /// Weighted within-cluster sum of squares at the final centroids.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia measured at every assignment step.
    pub inertia_history: Vec<f64>,
    /// Digest of the encoding alphabet the model was fitted on.
    #[serde(default)]
    pub alphabet_hash: String,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid; lowest index wins ties.
fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

struct WeightedPoints {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

fn collapse(vectors: &[PrefixVector], deduplicate: bool) -> WeightedPoints {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut points = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for v in vectors {
        let key: Vec<u64> = v.0.iter().map(|x| x.to_bits()).collect();
        match index.get(&key) {
            Some(&i) => {
                if !deduplicate {
                    weights[i] += 1.0;
                }
            }
            None => {
                index.insert(key, points.len());
                points.push(v.0.clone());
                weights.push(1.0);
            }
        }
    }
    WeightedPoints { points, weights }
}

fn plus_plus_seeds(wp: &WeightedPoints, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let first = WeightedIndex::new(&wp.weights).expect("positive weights").sample(rng);
    let mut centroids = vec![wp.points[first].clone()];
    let mut d2: Vec<f64> = wp.points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let mass: Vec<f64> = d2.iter().zip(&wp.weights).map(|(d, w)| d * w).collect();
        // k <= distinct points, so some mass remains
        let next = WeightedIndex::new(&mass).expect("remaining mass").sample(rng);
        let c = wp.points[next].clone();
        for (d, p) in d2.iter_mut().zip(&wp.points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

pub fn fit(vectors: &[PrefixVector], cfg: &KMeansConfig) -> Result<KMeansModel, ClusterError> {
    if vectors.is_empty() {
        return Err(ClusterError::Empty);
    }
    if cfg.k == 0 {
        return Err(ClusterError::ZeroK);
    }
    let dim = vectors[0].dim();
    if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(ClusterError::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    let wp = collapse(vectors, cfg.deduplicate);
    if cfg.k > wp.points.len() {
        return Err(ClusterError::KTooLarge {
            k: cfg.k,
            distinct: wp.points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = plus_plus_seeds(&wp, cfg.k, &mut rng);
    let mut history = Vec::new();
    let mut iterations = 0;

    loop {
        let assignment: Vec<(usize, f64)> = wp.points.par_iter().map(|p| nearest(&centroids, p)).collect();
        history.push(assignment.iter().zip(&wp.weights).map(|((_, d), w)| d * w).sum::<f64>());
        if iterations == cfg.max_iter {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; cfg.k];
        let mut mass = vec![0.0; cfg.k];
        for ((p, w), (c, _)) in wp.points.iter().zip(&wp.weights).zip(&assignment) {
            mass[*c] += w;
            for (s, x) in sums[*c].iter_mut().zip(p) {
                *s += w * x;
            }
        }
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(cfg.k);
        let mut taken: Vec<usize> = Vec::new();
        for (sum, m) in sums.into_iter().zip(&mass) {
            if *m > 0.0 {
                next.push(sum.into_iter().map(|s| s / m).collect());
            } else {
                // empty: move to the point worst served by its centroid
                let far = (0..wp.points.len())
                    .filter(|i| !taken.contains(i))
                    .fold(None::<(usize, f64)>, |best, i| match best {
                        Some((_, d)) if assignment[i].1 <= d => best,
                        _ => Some((i, assignment[i].1)),
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                taken.push(far);
                next.push(wp.points[far].clone());
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < cfg.tol {
            let final_inertia: f64 = wp
                .points
                .par_iter()
                .map(|p| nearest(&centroids, p).1)
                .collect::<Vec<_>>()
                .iter()
                .zip(&wp.weights)
                .map(|(d, w)| d * w)
                .sum();
            history.push(final_inertia);
            break;
        }
    }

    Ok(KMeansModel {
        k: cfg.k,
        seed: cfg.seed,
        centroids,
        inertia: *history.last().expect("at least one assignment"),
        iterations,
        inertia_history: history,
        alphabet_hash: String::new(),
    })
}

impl KMeansModel {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn assign(&self, vector: &PrefixVector) -> Result<usize, ClusterError> {
        self.assign_slice(vector.as_slice())
    }

    pub fn assign_slice(&self, v: &[f64]) -> Result<usize, ClusterError> {
        if v.len() != self.dim() {
            return Err(ClusterError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(nearest(&self.centroids, v).0)
    }

    /// Digest of k, seed and the exact centroid bits.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.k as u64).to_le_bytes());
        h.update(self.seed.to_le_bytes());
        for c in &self.centroids {
            for x in c {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Euclidean distance from `v` to centroid `c`.
    pub fn distance_to(&self, c: usize, v: &[f64]) -> f64 {
        sq_dist(&self.centroids[c], v).sqrt()
    }
}

/// Mean silhouette coefficient over a seeded subsample of at most `sample_cap`
/// vectors.
pub fn silhouette(
    vectors: &[PrefixVector],
    model: &KMeansModel,
    sample_cap: usize,
    seed: u64,
) -> Result<f64, ClusterError> {
    let mut idx: Vec<usize> = if vectors.len() > sample_cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, vectors.len(), sample_cap).into_vec()
    } else {
        (0..vectors.len()).collect()
    };
    idx.sort_unstable();
    let sample: Vec<&[f64]> = idx.iter().map(|&i| vectors[i].as_slice()).collect();
    let labels = sample
        .iter()
        .map(|v| model.assign_slice(v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut sizes = vec![0usize; model.k];
    for &l in &labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let scores: Vec<f64> = (0..sample.len())
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sum = vec![0.0; model.k];
            for (j, v) in sample.iter().enumerate() {
                if j != i {
                    sum[labels[j]] += sq_dist(sample[i], v).sqrt();
                }
            }
            let a = sum[own] / (sizes[own] - 1) as f64;
            let b = (0..model.k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sum[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
