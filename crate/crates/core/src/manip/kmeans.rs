//! Hard k-means over token embeddings.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sampling::derive_seed;
use crate::error::{Error, Result};
use crate::lmcore::{EmbeddingMatrix, TokenDistribution};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub k: usize,
    /// Cluster id per token.
    pub assignment: Vec<usize>,
    /// `k` rows of the embedding width; zero-width for label-only assignments.
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each assignment step of the selected run.
    pub inertia_history: Vec<f64>,
}

impl ClusterAssignment {
    /// Assignment given directly as labels, with no geometry attached.
    pub fn from_labels(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("cluster count must be positive".into()));
        }
        if let Some(bad) = labels.iter().find(|&&c| c >= k) {
            return Err(Error::Domain(format!("cluster id {bad} outside [0, {k})")));
        }
        Ok(Self {
            k,
            assignment: labels,
            centroids: vec![Vec::new(); k],
            inertia: 0.0,
            inertia_history: Vec::new(),
        })
    }

    /// Every token in its own cluster.
    pub fn singletons(n: usize) -> Self {
        Self::from_labels((0..n).collect(), n.max(1)).expect("labels below n")
    }

    pub fn n_tokens(&self) -> usize {
        self.assignment.len()
    }

    pub fn cluster_of(&self, token: u32) -> usize {
        self.assignment[token as usize]
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = u32> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(t, _)| t as u32)
    }
}

/// Probability mass of each cluster under `dist`.
pub fn cluster_masses(dist: &TokenDistribution, clusters: &ClusterAssignment) -> Result<Vec<f64>> {
    if dist.len() != clusters.n_tokens() {
        return Err(Error::Domain(format!(
            "clustering covers {} tokens, distribution has {}",
            clusters.n_tokens(),
            dist.len()
        )));
    }
    let mut masses = vec![0.0; clusters.k];
    for (lp, &c) in dist.logprobs().iter().zip(&clusters.assignment) {
        masses[c] += lp.exp();
    }
    Ok(masses)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_centroids<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if u < acc && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn means(points: &[Vec<f64>], labels: &[usize], centroids: &mut [Vec<f64>]) -> Vec<usize> {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(labels) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
        }
    }
    counts
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> ClusterAssignment {
    let mut centroids = seed_centroids(points, k, rng);
    let mut labels: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let (next, dists): (Vec<usize>, Vec<f64>) = points.iter().map(|p| nearest(p, &centroids)).unzip();
        history.push(dists.iter().sum());
        if next == labels {
            break;
        }
        labels = next;
        let counts = means(points, &labels, &mut centroids);
        // Empty clusters take the point farthest from its current centroid.
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far = (0..points.len())
                .max_by(|&a, &b| {
                    let da = sq_dist(&points[a], &centroids[labels[a]]);
                    let db = sq_dist(&points[b], &centroids[labels[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("points are nonempty");
            centroids[j] = points[far].clone();
            labels[far] = j;
        }
    }
    means(points, &labels, &mut centroids);
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    ClusterAssignment {
        k,
        assignment: labels,
        centroids,
        inertia,
        inertia_history: history,
    }
}

/// Best of `runs` seeded Lloyd runs with distance-weighted initialization.
pub fn kmeans_cluster(embeddings: &EmbeddingMatrix, k: usize, runs: usize, seed: u64) -> Result<ClusterAssignment> {
    if k == 0 || runs == 0 {
        return Err(Error::Domain("k and runs must be positive".into()));
    }
    let points: Vec<Vec<f64>> = (0..embeddings.n_rows())
        .map(|i| embeddings.row(i).iter().map(|&v| v as f64).collect())
        .collect();
    let distinct: HashSet<Vec<u32>> = (0..embeddings.n_rows())
        .map(|i| embeddings.row(i).iter().map(|v| v.to_bits()).collect())
        .collect();
    if k > distinct.len() {
        return Err(Error::Domain(format!(
            "k = {k} exceeds the {} distinct embedding rows",
            distinct.len()
        )));
    }
    let mut best: Option<ClusterAssignment> = None;
    for r in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
        let fit = lloyd(&points, k, &mut rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("runs > 0"))
}
