//! Clustering of embedding matrices (k-means, diagonal Gaussian mixtures,
//! average-linkage agglomeration) and cluster-count selection.
//!
//! Distances are Euclidean throughout. Every fit is deterministic given its
//! input and seed.

mod gmm;
mod hierarchical;
mod kmeans;
mod select;
mod silhouette;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gmm::{gmm_em, GmmModel, VARIANCE_FLOOR};
pub use hierarchical::{build_dendrogram, hierarchical, CutRule, Dendrogram, Merge};
pub use kmeans::{kmeans, kmeans_single, KMeansModel, KMeansRun, N_INIT};
pub use select::{
    knee_index, select_k, select_k_bic, select_k_elbow, select_k_silhouette, sse_of, Selection,
};
pub use silhouette::{silhouette_samples, silhouette_score};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("invalid cluster count k={k} for {rows} rows")]
    InvalidK { k: usize, rows: usize },
    #[error("invalid cluster-count range: {0}")]
    InvalidRange(String),
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("{cn} cannot select the cluster count for {algo}")]
    IncompatibleAlgorithm { algo: ClusterAlgo, cn: CnKind },
    #[error("invalid cut fraction {0}; expected a value in (0, 1]")]
    InvalidCut(f64),
    #[error("need at least {needed} rows, got {rows}")]
    TooFewRows { needed: usize, rows: usize },
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("internal clustering error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterAlgo {
    #[serde(alias = "k-means")]
    Kmeans,
    Gmm,
    Hierarchical,
}

impl std::fmt::Display for ClusterAlgo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClusterAlgo::Kmeans => "kmeans",
            ClusterAlgo::Gmm => "gmm",
            ClusterAlgo::Hierarchical => "hierarchical",
        })
    }
}

impl std::str::FromStr for ClusterAlgo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(ClusterAlgo::Kmeans),
            "gmm" => Ok(ClusterAlgo::Gmm),
            "hierarchical" => Ok(ClusterAlgo::Hierarchical),
            other => Err(format!("unknown cluster algorithm `{other}`")),
        }
    }
}

/// Rule for picking the number of clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CnKind {
    Elbow,
    Silhouette,
    Bic,
    None,
}

impl std::fmt::Display for CnKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CnKind::Elbow => "elbow",
            CnKind::Silhouette => "silhouette",
            CnKind::Bic => "bic",
            CnKind::None => "none",
        })
    }
}

impl std::str::FromStr for CnKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "elbow" => Ok(CnKind::Elbow),
            "silhouette" => Ok(CnKind::Silhouette),
            "bic" => Ok(CnKind::Bic),
            "none" | "-" => Ok(CnKind::None),
            other => Err(format!("unknown cluster-number method `{other}`")),
        }
    }
}

/// Whether `cn` can choose k for `algo`. Hierarchical clustering derives its
/// own cluster count; BIC needs a likelihood, so only GMM supports it.
pub fn is_compatible(algo: ClusterAlgo, cn: CnKind) -> bool {
    matches!(
        (algo, cn),
        (ClusterAlgo::Kmeans, CnKind::Elbow | CnKind::Silhouette)
            | (ClusterAlgo::Gmm, CnKind::Elbow | CnKind::Silhouette | CnKind::Bic)
            | (ClusterAlgo::Hierarchical, CnKind::None)
    )
}

/// The six compatible (algorithm, selector) pairs in reporting order.
pub fn compatible_pairs() -> Vec<(ClusterAlgo, CnKind)> {
    let algos = [ClusterAlgo::Kmeans, ClusterAlgo::Gmm, ClusterAlgo::Hierarchical];
    let cns = [CnKind::Elbow, CnKind::Silhouette, CnKind::Bic, CnKind::None];
    algos
        .iter()
        .flat_map(|&a| cns.iter().map(move |&c| (a, c)))
        .filter(|&(a, c)| is_compatible(a, c))
        .collect()
}

/// Cluster-count selector with its inclusive search range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnMethod {
    pub kind: CnKind,
    pub k_min: usize,
    pub k_max: usize,
}

impl CnMethod {
    pub const DEFAULT_K_MIN: usize = 2;
    pub const DEFAULT_K_MAX: usize = 12;

    pub fn new(kind: CnKind, k_min: usize, k_max: usize) -> Self {
        CnMethod { kind, k_min, k_max }
    }

    pub fn with_defaults(kind: CnKind) -> Self {
        Self::new(kind, Self::DEFAULT_K_MIN, Self::DEFAULT_K_MAX)
    }

    /// Checks the range against a matrix with `rows` rows.
    pub fn validate(&self, rows: usize) -> Result<(), ClusterError> {
        let min_allowed = if self.kind == CnKind::Bic { 1 } else { 2 };
        if self.k_min < min_allowed {
            return Err(ClusterError::InvalidRange(format!(
                "k_min must be at least {min_allowed} for {}",
                self.kind
            )));
        }
        if self.k_min > self.k_max {
            return Err(ClusterError::InvalidRange(format!(
                "k_min {} exceeds k_max {}",
                self.k_min, self.k_max
            )));
        }
        if self.k_max >= rows {
            return Err(ClusterError::InvalidRange(format!(
                "k_max {} must be below the row count {rows}",
                self.k_max
            )));
        }
        Ok(())
    }
}

/// Iteration controls shared by k-means and EM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams {
            seed: 42,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

impl FitParams {
    pub fn with_seed(seed: u64) -> Self {
        FitParams {
            seed,
            ..Self::default()
        }
    }
}

/// Hard cluster labels `0..k`, every cluster non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    /// Validates that labels cover exactly `0..k` with no gaps.
    pub fn new(labels: Vec<usize>) -> Result<Self, ClusterError> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(ClusterError::InvalidAssignment(format!("cluster {missing} is empty")));
        }
        Ok(ClusterAssignment { labels, k })
    }

    /// Renumbers arbitrary labels by order of first appearance, dropping
    /// unused ones. Returns the assignment and, for each new label, the old one.
    pub fn compact(raw: &[usize]) -> (Self, Vec<usize>) {
        let mut old_of_new: Vec<usize> = Vec::new();
        let mut labels = Vec::with_capacity(raw.len());
        for &r in raw {
            let new = match old_of_new.iter().position(|&o| o == r) {
                Some(p) => p,
                None => {
                    old_of_new.push(r);
                    old_of_new.len() - 1
                }
            };
            labels.push(new);
        }
        let k = old_of_new.len();
        (ClusterAssignment { labels, k }, old_of_new)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row indices of each cluster, in row order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}
