use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gmm::gmm_em;
use super::kmeans::kmeans;
use super::silhouette::silhouette_score;
use super::{sq_dist, ClusterAlgo, ClusterAssignment, ClusterError, CnKind, CnMethod, FitParams};
use crate::embed::EmbeddingMatrix;

/// Chosen k plus the per-k score table that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: CnKind,
    pub k: usize,
    /// `(k, score)`: SSE for elbow, mean silhouette, or BIC.
    pub trace: Vec<(usize, f64)>,
}

/// Sum of squared distances from each row to the mean of its cluster.
pub fn sse_of(x: &EmbeddingMatrix, assignment: &ClusterAssignment) -> f64 {
    let mut means = vec![vec![0.0; x.dim()]; assignment.k()];
    let sizes = assignment.sizes();
    for (row, &l) in x.rows().zip(assignment.labels()) {
        for (m, v) in means[l].iter_mut().zip(row) {
            *m += v;
        }
    }
    for (m, &s) in means.iter_mut().zip(&sizes) {
        m.iter_mut().for_each(|v| *v /= s as f64);
    }
    x.rows()
        .zip(assignment.labels())
        .map(|(row, &l)| sq_dist(row, &means[l]))
        .sum()
}

/// Index of the point farthest from the chord joining the first and last
/// points of `curve`; ties go to the earliest point.
pub fn knee_index(curve: &[(usize, f64)]) -> usize {
    if curve.len() < 3 {
        return 0;
    }
    let (x1, y1) = (curve[0].0 as f64, curve[0].1);
    let (x2, y2) = (curve[curve.len() - 1].0 as f64, curve[curve.len() - 1].1);
    let (dx, dy) = (x2 - x1, y2 - y1);
    let len = (dx * dx + dy * dy).sqrt();
    if len == 0.0 {
        return 0;
    }
    let scale = curve.iter().map(|p| p.1.abs()).fold(0.0, f64::max) + 1.0;
    let eps = 1e-12 * scale;
    let mut best = (0, 0.0);
    for (i, &(k, y)) in curve.iter().enumerate() {
        let d = (dy * k as f64 - dx * y + x2 * y1 - y2 * x1).abs() / len;
        if d > best.1 + eps {
            best = (i, d);
        }
    }
    best.0
}

fn fit(
    x: &EmbeddingMatrix,
    algo: ClusterAlgo,
    k: usize,
    params: &FitParams,
) -> Result<(ClusterAssignment, Option<f64>, f64), ClusterError> {
    match algo {
        ClusterAlgo::Kmeans => {
            let (model, a) = kmeans(x, k, params.seed, params.max_iter, params.tol)?;
            Ok((a, None, model.sse))
        }
        ClusterAlgo::Gmm => {
            let (model, a) = gmm_em(x, k, params.seed, params.max_iter, params.tol)?;
            let sse = sse_of(x, &a);
            Ok((a, Some(model.bic(x.nrows())), sse))
        }
        ClusterAlgo::Hierarchical => Err(ClusterError::IncompatibleAlgorithm {
            algo,
            cn: CnKind::None,
        }),
    }
}

fn scan<F>(range: &CnMethod, score: F) -> Result<Vec<(usize, f64)>, ClusterError>
where
    F: Fn(usize) -> Result<f64, ClusterError> + Sync,
{
    (range.k_min..=range.k_max)
        .into_par_iter()
        .map(|k| score(k).map(|s| (k, s)))
        .collect()
}

fn require(algo: ClusterAlgo, cn: CnKind) -> Result<(), ClusterError> {
    if super::is_compatible(algo, cn) {
        Ok(())
    } else {
        Err(ClusterError::IncompatibleAlgorithm { algo, cn })
    }
}

/// Knee of the SSE curve over `range` (GMM uses the SSE of its hard labels).
pub fn select_k_elbow(
    x: &EmbeddingMatrix,
    algo: ClusterAlgo,
    range: &CnMethod,
    params: &FitParams,
) -> Result<Selection, ClusterError> {
    require(algo, CnKind::Elbow)?;
    range.validate(x.nrows())?;
    let trace = scan(range, |k| fit(x, algo, k, params).map(|(_, _, sse)| sse))?;
    let k = trace[knee_index(&trace)].0;
    Ok(Selection {
        method: CnKind::Elbow,
        k,
        trace,
    })
}

/// k with the highest mean silhouette; ties go to the smaller k. A fit that
/// collapses to one cluster scores negative infinity.
pub fn select_k_silhouette(
    x: &EmbeddingMatrix,
    algo: ClusterAlgo,
    range: &CnMethod,
    params: &FitParams,
) -> Result<Selection, ClusterError> {
    require(algo, CnKind::Silhouette)?;
    range.validate(x.nrows())?;
    let trace = scan(range, |k| {
        let (a, _, _) = fit(x, algo, k, params)?;
        if a.k() < 2 {
            return Ok(f64::NEG_INFINITY);
        }
        silhouette_score(x, &a)
    })?;
    let k = trace
        .iter()
        .fold(trace[0], |best, &p| if p.1 > best.1 { p } else { best })
        .0;
    Ok(Selection {
        method: CnKind::Silhouette,
        k,
        trace,
    })
}

/// k minimizing `BIC = p ln n - 2 ln L` of a diagonal GMM; ties go to the
/// smaller k. Only valid for GMM.
pub fn select_k_bic(
    x: &EmbeddingMatrix,
    algo: ClusterAlgo,
    range: &CnMethod,
    params: &FitParams,
) -> Result<Selection, ClusterError> {
    require(algo, CnKind::Bic)?;
    range.validate(x.nrows())?;
    let trace = scan(range, |k| {
        let (_, bic, _) = fit(x, algo, k, params)?;
        Ok(bic.expect("gmm reports bic"))
    })?;
    let k = trace
        .iter()
        .fold(trace[0], |best, &p| if p.1 < best.1 { p } else { best })
        .0;
    Ok(Selection {
        method: CnKind::Bic,
        k,
        trace,
    })
}

/// Dispatches on `cn.kind`.
pub fn select_k(
    x: &EmbeddingMatrix,
    algo: ClusterAlgo,
    cn: &CnMethod,
    params: &FitParams,
) -> Result<Selection, ClusterError> {
    match cn.kind {
        CnKind::Elbow => select_k_elbow(x, algo, cn, params),
        CnKind::Silhouette => select_k_silhouette(x, algo, cn, params),
        CnKind::Bic => select_k_bic(x, algo, cn, params),
        CnKind::None => Err(ClusterError::IncompatibleAlgorithm { algo, cn: CnKind::None }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[(f64, f64)], per: usize, sigma: f64, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let rows = centers
            .iter()
            .flat_map(|&(cx, cy)| {
                (0..per)
                    .map(|_| vec![cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)])
                    .collect::<Vec<_>>()
            })
            .collect();
        EmbeddingMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn knee_of_hand_curve() {
        // chord from (2,100) to (5,16) has slope -28; vertical gaps are
        // 0, 52, 26, 0, so k = 3 is farthest
        let curve = [(2, 100.0), (3, 20.0), (4, 18.0), (5, 16.0)];
        assert_eq!(curve[knee_index(&curve)].0, 3);
    }

    #[test]
    fn linear_curve_ties_to_first() {
        let curve = [(2, 10.0), (3, 8.0), (4, 6.0), (5, 4.0)];
        assert_eq!(knee_index(&curve), 0);
        assert_eq!(knee_index(&[(3, 1.0)]), 0);
    }

    #[test]
    fn bic_rejects_kmeans() {
        let x = blobs(&[(0.0, 0.0), (5.0, 5.0)], 5, 0.1, 0);
        let err = select_k_bic(&x, ClusterAlgo::Kmeans, &CnMethod::new(CnKind::Bic, 1, 4), &FitParams::default())
            .unwrap_err();
        assert_eq!(
            err,
            ClusterError::IncompatibleAlgorithm {
                algo: ClusterAlgo::Kmeans,
                cn: CnKind::Bic
            }
        );
    }

    #[test]
    fn single_k_range_returns_it() {
        let x = blobs(&[(0.0, 0.0), (5.0, 5.0), (0.0, 5.0)], 6, 0.2, 1);
        let range = CnMethod::new(CnKind::Silhouette, 4, 4);
        let s = select_k_silhouette(&x, ClusterAlgo::Kmeans, &range, &FitParams::default()).unwrap();
        assert_eq!(s.k, 4);
        let range = CnMethod::new(CnKind::Elbow, 4, 4);
        assert_eq!(select_k_elbow(&x, ClusterAlgo::Gmm, &range, &FitParams::default()).unwrap().k, 4);
    }

    #[test]
    fn silhouette_finds_two_blobs() {
        let x = blobs(&[(0.0, 0.0), (8.0, 8.0)], 15, 0.5, 2);
        let range = CnMethod::new(CnKind::Silhouette, 2, 6);
        let s = select_k_silhouette(&x, ClusterAlgo::Kmeans, &range, &FitParams::with_seed(3)).unwrap();
        assert_eq!(s.k, 2);
        assert_eq!(s.trace.len(), 5);
    }

    #[test]
    fn bic_at_k_one_is_closed_form() {
        let x = blobs(&[(0.0, 0.0)], 20, 1.0, 4);
        let range = CnMethod::new(CnKind::Bic, 1, 1);
        let s = select_k_bic(&x, ClusterAlgo::Gmm, &range, &FitParams::default()).unwrap();
        let n = 20.0f64;
        let mut ll = 0.0;
        for j in 0..2 {
            let mean = x.rows().map(|r| r[j]).sum::<f64>() / n;
            let var = x.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            ll += x
                .rows()
                .map(|r| -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (r[j] - mean).powi(2) / var))
                .sum::<f64>();
        }
        let expected = 4.0 * n.ln() - 2.0 * ll;
        assert!((s.trace[0].1 - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn invalid_range_is_reported() {
        let x = blobs(&[(0.0, 0.0)], 5, 1.0, 0);
        let range = CnMethod::new(CnKind::Elbow, 2, 5);
        assert!(matches!(
            select_k_elbow(&x, ClusterAlgo::Kmeans, &range, &FitParams::default()),
            Err(ClusterError::InvalidRange(_))
        ));
    }
}
