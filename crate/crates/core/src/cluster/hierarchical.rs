use serde::{Deserialize, Serialize};

use super::{euclidean, ClusterAssignment, ClusterError};
use crate::embed::EmbeddingMatrix;

/// One agglomeration step. Leaves are nodes `0..n`; the i-th merge creates
/// node `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub n_leaves: usize,
}

/// Flat cut at a fraction of the largest merge distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutRule {
    pub distance_fraction: f64,
}

impl Default for CutRule {
    fn default() -> Self {
        CutRule {
            distance_fraction: 0.5,
        }
    }
}

impl Dendrogram {
    pub fn max_distance(&self) -> f64 {
        self.merges.iter().map(|m| m.distance).fold(0.0, f64::max)
    }

    /// Clusters formed by every merge at distance `<= threshold`, labelled in
    /// order of their first leaf.
    pub fn cut_at(&self, threshold: f64) -> ClusterAssignment {
        let total = self.n_leaves + self.merges.len();
        let mut parent: Vec<usize> = (0..total).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for m in &self.merges {
            if m.distance <= threshold {
                let ra = find(&mut parent, m.a);
                let rb = find(&mut parent, m.b);
                parent[ra] = m.node;
                parent[rb] = m.node;
            }
        }
        let roots: Vec<usize> = (0..self.n_leaves).map(|i| find(&mut parent, i)).collect();
        ClusterAssignment::compact(&roots).0
    }

    pub fn cut(&self, rule: CutRule) -> Result<ClusterAssignment, ClusterError> {
        let f = rule.distance_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(ClusterError::InvalidCut(f));
        }
        Ok(self.cut_at(f * self.max_distance()))
    }
}

/// Average-linkage agglomeration over Euclidean distances.
///
/// Each step merges the closest pair of active clusters (ties: lowest slot
/// indices); distances to the merged cluster follow the size-weighted
/// Lance-Williams update.
pub fn build_dendrogram(x: &EmbeddingMatrix) -> Result<Dendrogram, ClusterError> {
    let n = x.nrows();
    if n < 2 {
        return Err(ClusterError::TooFewRows { needed: 2, rows: n });
    }
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean(x.row(i), x.row(j));
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut active = vec![true; n];
    let mut node_of = (0..n).collect::<Vec<_>>();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);
    let mut last = 0.0f64;
    for step in 0..(n - 1) {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in (0..n).filter(|&i| active[i]) {
            for j in ((i + 1)..n).filter(|&j| active[j]) {
                if dist[i][j] < best.2 {
                    best = (i, j, dist[i][j]);
                }
            }
        }
        let (i, j, d) = best;
        if d < last - 1e-9 * last.max(1.0) {
            return Err(ClusterError::Internal(format!(
                "non-monotone merge: {d} after {last}"
            )));
        }
        last = last.max(d);
        let node = n + step;
        merges.push(Merge {
            a: node_of[i],
            b: node_of[j],
            distance: d,
            node,
        });
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for c in (0..n).filter(|&c| active[c] && c != i && c != j) {
            let merged = (si * dist[i][c] + sj * dist[j][c]) / (si + sj);
            dist[i][c] = merged;
            dist[c][i] = merged;
        }
        active[j] = false;
        size[i] += size[j];
        node_of[i] = node;
    }
    Ok(Dendrogram { merges, n_leaves: n })
}

/// Builds the dendrogram and cuts it with `cut`.
pub fn hierarchical(
    x: &EmbeddingMatrix,
    cut: CutRule,
) -> Result<(Dendrogram, ClusterAssignment), ClusterError> {
    let dendrogram = build_dendrogram(x)?;
    let assignment = dendrogram.cut(cut)?;
    Ok((dendrogram, assignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn four_points() -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn four_point_example() {
        let (d, a) = hierarchical(&four_points(), CutRule::default()).unwrap();
        assert_eq!(a.labels(), [0, 0, 1, 1]);
        assert_eq!(d.merges[0].distance, 1.0);
        assert_eq!(d.merges[1].distance, 1.0);
        // average of 10, sqrt(101), sqrt(101), 10
        let top = (10.0 + 2.0 * 101f64.sqrt() + 10.0) / 4.0;
        assert!((d.merges[2].distance - top).abs() < 1e-12);
        assert!((top - 10.0249).abs() < 1e-4);
    }

    #[test]
    fn full_fraction_gives_one_cluster() {
        let a = build_dendrogram(&four_points())
            .unwrap()
            .cut(CutRule { distance_fraction: 1.0 })
            .unwrap();
        assert_eq!(a.k(), 1);
    }

    #[test]
    fn tiny_fraction_gives_singletons() {
        let a = build_dendrogram(&four_points())
            .unwrap()
            .cut(CutRule { distance_fraction: 1e-9 })
            .unwrap();
        assert_eq!(a.k(), 4);
    }

    #[test]
    fn bad_fraction_and_too_few_rows() {
        let d = build_dendrogram(&four_points()).unwrap();
        assert_eq!(d.cut(CutRule { distance_fraction: 0.0 }), Err(ClusterError::InvalidCut(0.0)));
        assert!(d.cut(CutRule { distance_fraction: 1.5 }).is_err());
        let one = EmbeddingMatrix::from_rows(vec![vec![1.0]]).unwrap();
        assert!(matches!(build_dendrogram(&one), Err(ClusterError::TooFewRows { .. })));
    }

    #[test]
    fn merges_are_fresh_and_monotone() {
        let rows: Vec<Vec<f64>> = (0..25)
            .map(|i| vec![(i * 7 % 11) as f64, (i * 3 % 5) as f64 * 0.5])
            .collect();
        let d = build_dendrogram(&EmbeddingMatrix::from_rows(rows).unwrap()).unwrap();
        assert_eq!(d.merges.len(), 24);
        let mut used = HashSet::new();
        for (step, m) in d.merges.iter().enumerate() {
            assert_eq!(m.node, 25 + step);
            assert!(m.a < m.node && m.b < m.node);
            assert!(used.insert(m.a) && used.insert(m.b), "node merged twice");
        }
        for w in d.merges.windows(2) {
            assert!(w[1].distance >= w[0].distance - 1e-9);
        }
    }
}
