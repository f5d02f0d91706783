use super::{euclidean, ClusterAssignment, ClusterError};
use crate::embed::EmbeddingMatrix;

/// Per-row silhouette `(b - a) / max(a, b)` with Euclidean distances.
///
/// `a` is the mean distance to the other members of the row's cluster, `b`
/// the smallest mean distance to another cluster. Rows in singleton clusters
/// score 0, as do rows with `a == b == 0`.
pub fn silhouette_samples(
    x: &EmbeddingMatrix,
    assignment: &ClusterAssignment,
) -> Result<Vec<f64>, ClusterError> {
    let n = x.nrows();
    if assignment.len() != n {
        return Err(ClusterError::InvalidAssignment(format!(
            "{} labels for {n} rows",
            assignment.len()
        )));
    }
    let k = assignment.k();
    if k < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let labels = assignment.labels();
    let sizes = assignment.sizes();
    let mut out = Vec::with_capacity(n);
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[labels[j]] += euclidean(x.row(i), x.row(j));
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            out.push(0.0);
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        out.push(if denom == 0.0 { 0.0 } else { (b - a) / denom });
    }
    Ok(out)
}

/// Mean of [`silhouette_samples`].
pub fn silhouette_score(x: &EmbeddingMatrix, assignment: &ClusterAssignment) -> Result<f64, ClusterError> {
    let samples = silhouette_samples(x, assignment)?;
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn identical_points_in_far_clusters_score_one() {
        let x = matrix(vec![vec![0.0], vec![0.0], vec![5.0], vec![5.0]]);
        let a = ClusterAssignment::new(vec![0, 0, 1, 1]).unwrap();
        assert_eq!(silhouette_samples(&x, &a).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn equidistant_point_scores_zero() {
        // row 1 at x=1: a = |1-0| = 1, b = |1-2| = 1
        let x = matrix(vec![vec![0.0], vec![1.0], vec![2.0], vec![2.0]]);
        let a = ClusterAssignment::new(vec![0, 0, 1, 1]).unwrap();
        assert_eq!(silhouette_samples(&x, &a).unwrap()[1], 0.0);
    }

    #[test]
    fn singleton_cluster_scores_zero() {
        let x = matrix(vec![vec![0.0], vec![0.1], vec![9.0]]);
        let a = ClusterAssignment::new(vec![0, 0, 1]).unwrap();
        let s = silhouette_samples(&x, &a).unwrap();
        assert_eq!(s[2], 0.0);
        assert!(s[0] > 0.9);
    }

    #[test]
    fn single_cluster_is_an_error() {
        let x = matrix(vec![vec![0.0], vec![1.0]]);
        let a = ClusterAssignment::new(vec![0, 0]).unwrap();
        assert_eq!(silhouette_samples(&x, &a), Err(ClusterError::SingleCluster));
    }

    #[test]
    fn samples_lie_in_unit_interval() {
        let x = matrix((0..30).map(|i| vec![(i * 13 % 7) as f64, (i % 4) as f64]).collect());
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let a = ClusterAssignment::new(labels).unwrap();
        for s in silhouette_samples(&x, &a).unwrap() {
            assert!((-1.0..=1.0).contains(&s));
        }
    }
}
