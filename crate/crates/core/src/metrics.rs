//! Tree quality scores and recommendation precision.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{silhouette_samples, ClusterAssignment, ClusterError};
use crate::embed::{cosine_slices, EmbedError, Embedder, EmbeddingMatrix};
use crate::tree::FeatureTree;

/// Printed with every surrogate score so it is never mistaken for GValue.
pub const GVALUE_FORMULA_NOTE: &str = "gvalue_surrogate is a stand-in, not the published GValue: \
mean over internal nodes p of clamp(coverage(p) - redundancy(p), 0, 1), where coverage(p) is the \
mean cosine between p and each of its children and redundancy(p) is the mean pairwise cosine among \
p's children (0 for fewer than two); all node texts are embedded together";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSilhouette {
    pub level: usize,
    pub nodes: usize,
    pub parents: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSilhouette {
    /// Node-count weighted mean over scored levels; 0 when none qualifies.
    pub score: f64,
    pub levels: Vec<LevelSilhouette>,
    /// No level had nodes under two or more parents.
    pub no_qualifying_level: bool,
}

/// Embeds the nodes of one level in tree order.
pub fn embed_level(tree: &FeatureTree, level: usize, embedder: &Embedder) -> Result<EmbeddingMatrix, EmbedError> {
    let nodes = tree.level(level);
    let ids: Vec<String> = nodes.iter().map(|n| n.id.clone()).collect();
    let texts: Vec<String> = nodes.iter().map(|n| n.embedding_text().to_string()).collect();
    embedder.embed(&ids, &texts)
}

/// Parent labels for the nodes of `level`, numbered by first appearance.
pub fn parent_labels(tree: &FeatureTree, level: usize) -> ClusterAssignment {
    let parents = tree.parent_map();
    let raw: Vec<usize> = tree
        .level(level)
        .iter()
        .map(|n| {
            let p = parents.get(n.id.as_str()).copied().unwrap_or_default();
            tree.nodes().position(|m| m.id == p).unwrap_or(usize::MAX)
        })
        .collect();
    ClusterAssignment::compact(&raw).0
}

/// Silhouette of each level whose nodes sit under at least two parents,
/// with parent membership as the cluster labels.
pub fn tree_silhouette(tree: &FeatureTree, embedder: &Embedder) -> Result<TreeSilhouette, MetricsError> {
    let mut levels = Vec::new();
    for level in 0..tree.max_level() {
        let labels = parent_labels(tree, level);
        if labels.k() < 2 {
            continue;
        }
        let x = embed_level(tree, level, embedder)?;
        let samples = silhouette_samples(&x, &labels)?;
        levels.push(LevelSilhouette {
            level,
            nodes: samples.len(),
            parents: labels.k(),
            score: samples.iter().sum::<f64>() / samples.len() as f64,
        });
    }
    if levels.is_empty() {
        log::warn!("no tree level has nodes under two or more parents; silhouette reported as 0");
        return Ok(TreeSilhouette {
            score: 0.0,
            levels,
            no_qualifying_level: true,
        });
    }
    let weighted: f64 = levels.iter().map(|l| l.nodes as f64 * l.score).sum();
    let total: usize = levels.iter().map(|l| l.nodes).sum();
    Ok(TreeSilhouette {
        score: weighted / total as f64,
        levels,
        no_qualifying_level: false,
    })
}

fn sorted_mean(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Surrogate for GValue; see [`GVALUE_FORMULA_NOTE`]. Zero for a tree with
/// no internal nodes.
pub fn gvalue_surrogate(tree: &FeatureTree, embedder: &Embedder) -> Result<f64, MetricsError> {
    let nodes: Vec<_> = tree.nodes().collect();
    let ids: Vec<String> = nodes.iter().map(|n| n.id.clone()).collect();
    let texts: Vec<String> = nodes.iter().map(|n| n.embedding_text().to_string()).collect();
    let x = embedder.embed(&ids, &texts)?;
    let index: std::collections::HashMap<&str, usize> =
        ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    let mut contributions = Vec::new();
    for (i, n) in nodes.iter().enumerate().filter(|(_, n)| !n.is_leaf()) {
        let kids: Vec<usize> = n.children.iter().map(|c| index[c.as_str()]).collect();
        let coverage = sorted_mean(kids.iter().map(|&c| cosine_slices(x.row(i), x.row(c))).collect());
        let mut pairs = Vec::new();
        for (a, &ca) in kids.iter().enumerate() {
            for &cb in &kids[a + 1..] {
                pairs.push(cosine_slices(x.row(ca), x.row(cb)));
            }
        }
        let redundancy = sorted_mean(pairs);
        contributions.push((coverage - redundancy).clamp(0.0, 1.0));
    }
    if contributions.is_empty() {
        return Ok(0.0);
    }
    Ok(contributions.iter().sum::<f64>() / contributions.len() as f64)
}

/// Share of distinct recommended ids that are gold; 0 for an empty list.
pub fn precision<S: AsRef<str>, G: AsRef<str>>(recommended: &[S], gold: &[G]) -> f64 {
    let rec: HashSet<&str> = recommended.iter().map(AsRef::as_ref).collect();
    if rec.is_empty() {
        return 0.0;
    }
    let gold: HashSet<&str> = gold.iter().map(AsRef::as_ref).collect();
    rec.intersection(&gold).count() as f64 / rec.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub silhouette: f64,
    pub per_level_silhouette: Vec<f64>,
    pub scored_levels: Vec<usize>,
    pub silhouette_degenerate: bool,
    pub gvalue_surrogate: f64,
    pub gvalue_formula_note: String,
}

impl MetricReport {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn score_tree(tree: &FeatureTree, embedder: &Embedder) -> Result<MetricReport, MetricsError> {
    let sil = tree_silhouette(tree, embedder)?;
    Ok(MetricReport {
        silhouette: sil.score,
        per_level_silhouette: sil.levels.iter().map(|l| l.score).collect(),
        scored_levels: sil.levels.iter().map(|l| l.level).collect(),
        silhouette_degenerate: sil.no_qualifying_level,
        gvalue_surrogate: gvalue_surrogate(tree, embedder)?,
        gvalue_formula_note: GVALUE_FORMULA_NOTE.to_string(),
    })
}
