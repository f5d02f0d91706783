use std::f64::consts::PI;

use super::kmeans::kmeans;
use super::{ClusterAssignment, ClusterError};
use crate::embed::EmbeddingMatrix;

/// Lower bound applied to every per-dimension variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Gaussian mixture with diagonal covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Log-likelihood of the initial parameters and after every M-step.
    pub ll_trace: Vec<f64>,
    /// Set when all rows coincide and `k > 1`.
    pub degenerate: bool,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Free parameters: `k - 1` weights, `k * d` means, `k * d` variances.
    pub fn free_parameters(&self) -> usize {
        let d = self.means.first().map_or(0, Vec::len);
        (self.k() - 1) + 2 * self.k() * d
    }

    /// `p ln n - 2 ln L`.
    pub fn bic(&self, n: usize) -> f64 {
        self.free_parameters() as f64 * (n as f64).ln() - 2.0 * self.log_likelihood
    }
}

/// Fits a diagonal GMM by EM, initialized from a seeded k-means run.
///
/// Responsibilities are computed in log space. Iteration stops once the
/// log-likelihood gains less than `tol` or after `max_iter` M-steps. Labels
/// are the most responsible component, renumbered by first appearance;
/// components that end up owning no row are dropped from the assignment
/// (but kept in the model).
pub fn gmm_em(
    x: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(GmmModel, ClusterAssignment), ClusterError> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(ClusterError::InvalidK { k, rows: n });
    }
    let degenerate = k > 1 && x.rows().all(|r| r == x.row(0));
    if degenerate {
        log::warn!("all {n} rows are identical; fitting {k} components with floored variances");
    }

    let (km, init) = kmeans(x, k, seed, max_iter, tol)?;
    let mut params = Params::from_hard(x, init.labels(), km.centroids.len());
    let (mut ll, mut resp) = e_step(x, &params);
    let mut ll_trace = vec![ll];
    let mut iterations = 0;
    while iterations < max_iter {
        params = m_step(x, &resp, &params);
        iterations += 1;
        let (next_ll, next_resp) = e_step(x, &params);
        ll_trace.push(next_ll);
        let gain = next_ll - ll;
        ll = next_ll;
        resp = next_resp;
        if gain < tol {
            break;
        }
    }

    let raw: Vec<usize> = resp
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &p)| if p > best.1 { (j, p) } else { best })
                .0
        })
        .collect();
    let (assignment, _) = ClusterAssignment::compact(&raw);
    Ok((
        GmmModel {
            weights: params.weights,
            means: params.means,
            variances: params.variances,
            log_likelihood: ll,
            iterations,
            seed,
            ll_trace,
            degenerate,
        },
        assignment,
    ))
}

#[derive(Debug, Clone)]
struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl Params {
    fn from_hard(x: &EmbeddingMatrix, labels: &[usize], k: usize) -> Self {
        let n = x.nrows();
        let mut resp = vec![vec![0.0; k]; n];
        for (r, &l) in resp.iter_mut().zip(labels) {
            r[l] = 1.0;
        }
        let empty = Params {
            weights: vec![0.0; k],
            means: vec![vec![0.0; x.dim()]; k],
            variances: vec![vec![VARIANCE_FLOOR; x.dim()]; k],
        };
        m_step(x, &resp, &empty)
    }
}

/// Log-likelihood and responsibilities of `x` under `params`.
fn e_step(x: &EmbeddingMatrix, params: &Params) -> (f64, Vec<Vec<f64>>) {
    let k = params.weights.len();
    let log_norm: Vec<f64> = params
        .variances
        .iter()
        .map(|var| -0.5 * var.iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>())
        .collect();
    let log_w: Vec<f64> = params.weights.iter().map(|w| w.ln()).collect();
    let mut total = 0.0;
    let mut resp = Vec::with_capacity(x.nrows());
    for row in x.rows() {
        let mut log_p = vec![f64::NEG_INFINITY; k];
        for j in 0..k {
            if params.weights[j] <= 0.0 {
                continue;
            }
            let maha: f64 = row
                .iter()
                .zip(&params.means[j])
                .zip(&params.variances[j])
                .map(|((xv, m), v)| (xv - m) * (xv - m) / v)
                .sum();
            log_p[j] = log_w[j] + log_norm[j] - 0.5 * maha;
        }
        let max = log_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = log_p.iter().map(|lp| (lp - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse;
        resp.push(log_p.iter().map(|lp| (lp - lse).exp()).collect());
    }
    (total, resp)
}

/// Weighted maximum-likelihood update. Components with (numerically) no
/// responsibility keep their previous mean and variance.
fn m_step(x: &EmbeddingMatrix, resp: &[Vec<f64>], prev: &Params) -> Params {
    let n = x.nrows() as f64;
    let k = prev.weights.len();
    let d = x.dim();
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = resp.iter().map(|r| r[j]).sum();
        weights.push(nk / n);
        if nk <= 1e-12 {
            means.push(prev.means[j].clone());
            variances.push(prev.variances[j].clone());
            continue;
        }
        let mut mean = vec![0.0; d];
        for (row, r) in x.rows().zip(resp) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += r[j] * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; d];
        for (row, r) in x.rows().zip(resp) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += r[j] * (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s = (*s / nk).max(VARIANCE_FLOOR));
        means.push(mean);
        variances.push(var);
    }
    Params {
        weights,
        means,
        variances,
    }
}
