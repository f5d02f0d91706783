use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{sq_dist, ClusterAssignment, ClusterError};
use crate::embed::EmbeddingMatrix;

/// Number of k-means++ restarts; the lowest-SSE restart wins.
pub const N_INIT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances from each row to its assigned centroid.
    pub sse: f64,
    pub iterations: usize,
    pub seed: u64,
    /// SSE after every assignment step of the winning restart.
    pub sse_trace: Vec<f64>,
}

/// Outcome of one k-means++ / Lloyd run, before relabelling.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub sse: f64,
    pub iterations: usize,
    pub sse_trace: Vec<f64>,
}

/// Best of [`N_INIT`] seeded k-means++ restarts.
///
/// Labels are renumbered by first appearance and the centroids permuted to
/// match.
pub fn kmeans(
    x: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(KMeansModel, ClusterAssignment), ClusterError> {
    check_k(x, k)?;
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let restart_seeds: Vec<u64> = (0..N_INIT).map(|_| seeder.random()).collect();
    let runs: Vec<KMeansRun> = restart_seeds
        .par_iter()
        .map(|&s| kmeans_single(x, k, s, max_iter, tol))
        .collect();
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.sse.total_cmp(&b.sse).then(ia.cmp(ib)))
        .map(|(_, run)| run)
        .expect("at least one restart");

    let (assignment, old_of_new) = ClusterAssignment::compact(&best.labels);
    let centroids = old_of_new.iter().map(|&o| best.centroids[o].clone()).collect();
    Ok((
        KMeansModel {
            centroids,
            sse: best.sse,
            iterations: best.iterations,
            seed,
            sse_trace: best.sse_trace,
        },
        assignment,
    ))
}

fn check_k(x: &EmbeddingMatrix, k: usize) -> Result<(), ClusterError> {
    if k == 0 || k > x.nrows() {
        return Err(ClusterError::InvalidK { k, rows: x.nrows() });
    }
    Ok(())
}

/// One k-means++ initialization followed by Lloyd iterations.
///
/// Stops when no centroid moves by `tol` or more, or after `max_iter`
/// updates. Clusters left empty by an assignment step are reseeded with the
/// row farthest from its centroid, so every cluster keeps at least one member.
pub fn kmeans_single(
    x: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> KMeansRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(x, k, &mut rng);
    let mut labels = assign(x, &centroids);
    repair_empty(x, &mut centroids, &mut labels);
    let mut sse_trace = vec![total_sse(x, &centroids, &labels)];
    let mut iterations = 0;
    while iterations < max_iter {
        let updated = cluster_means(x, &labels, k);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        labels = assign(x, &centroids);
        repair_empty(x, &mut centroids, &mut labels);
        iterations += 1;
        let sse = total_sse(x, &centroids, &labels);
        debug_assert!(
            sse <= sse_trace.last().unwrap() * (1.0 + 1e-9) + 1e-12,
            "k-means SSE increased"
        );
        sse_trace.push(sse);
        if shift < tol {
            break;
        }
    }
    KMeansRun {
        centroids,
        labels,
        sse: *sse_trace.last().unwrap(),
        iterations,
        sse_trace,
    }
}

fn plus_plus_init(x: &EmbeddingMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = x.nrows();
    let mut chosen: Vec<usize> = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = x.rows().map(|r| sq_dist(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just short of `target`
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // every row coincides with a chosen centroid
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, row) in x.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(row, x.row(next)));
        }
    }
    chosen.iter().map(|&i| x.row(i).to_vec()).collect()
}

fn assign(x: &EmbeddingMatrix, centroids: &[Vec<f64>]) -> Vec<usize> {
    x.rows()
        .map(|row| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = sq_dist(row, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn repair_empty(x: &EmbeddingMatrix, centroids: &mut [Vec<f64>], labels: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(x.row(a), &centroids[labels[a]]);
                let db = sq_dist(x.row(b), &centroids[labels[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with two members");
        centroids[empty] = x.row(donor).to_vec();
        labels[donor] = empty;
    }
}

fn cluster_means(x: &EmbeddingMatrix, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; x.dim()]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in x.rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        let c = c.max(1) as f64;
        s.iter_mut().for_each(|v| *v /= c);
    }
    sums
}

pub(crate) fn total_sse(x: &EmbeddingMatrix, centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    x.rows()
        .zip(labels)
        .map(|(row, &l)| sq_dist(row, &centroids[l]))
        .sum()
}
