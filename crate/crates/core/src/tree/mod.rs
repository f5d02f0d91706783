//! Multi-level feature trees: recursive embed, cluster and summarize passes
//! over an artifact library, plus validation, statistics and export.

mod build;
mod export;

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{is_compatible, ClusterAlgo, ClusterError, CnKind, CnMethod, CutRule};
use crate::embed::{EmbedError, EmbedderConfig};
use crate::ingest::ArtifactLibrary;
use crate::summarize::SummarizeError;
use crate::text::sha256_hex;

pub use build::{build_tree, build_tree_with, BuildOutcome, LevelTrace};
pub use export::{export_tree, import_tree, parse_tree_json, render_tree, ExportFormat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("incompatible solution: {cn} cannot select the cluster count for {algo} (k-means pairs with elbow or silhouette, GMM with elbow, silhouette or BIC, hierarchical with none)")]
    IncompatibleSolution { algo: ClusterAlgo, cn: CnKind },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("a tree needs at least 2 artifacts, the library has {0}")]
    TooFewArtifacts(usize),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Summarize(#[from] SummarizeError),
    #[error("schema violation ({0})")]
    Schema(String),
    #[error("{path}: {message}")]
    Io { path: std::path::PathBuf, message: String },
}

fn schema(rule: &str, detail: impl std::fmt::Display) -> TreeError {
    TreeError::Schema(format!("{rule}: {detail}"))
}

/// A tree node. Leaves (level 0) carry an artifact id and no children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureNode {
    pub id: String,
    pub name: String,
    pub description: String,
    pub level: usize,
    pub children: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_id: Option<String>,
}

impl FeatureNode {
    pub fn is_leaf(&self) -> bool {
        self.level == 0
    }

    /// Text embedded for this node: the description, or the name when the
    /// description is blank.
    pub fn embedding_text(&self) -> &str {
        if self.description.trim().is_empty() {
            &self.name
        } else {
            &self.description
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTree {
    nodes: IndexMap<String, FeatureNode>,
    top_ids: Vec<String>,
    library_size: usize,
    config_fingerprint: String,
}

/// Layer and node counts under both counting conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    /// Levels including the leaf level.
    pub layers_with_leaves: usize,
    /// Levels of summarized features above the leaves.
    pub feature_layers: usize,
    /// All nodes, leaves included.
    pub node_count: usize,
    /// Internal (summarized) nodes only.
    pub feature_node_count: usize,
    pub top_count: usize,
}

impl FeatureTree {
    /// Assembles and validates a tree.
    pub fn from_parts(
        nodes: Vec<FeatureNode>,
        top_ids: Vec<String>,
        library_size: usize,
        config_fingerprint: String,
    ) -> Result<Self, TreeError> {
        let mut map = IndexMap::with_capacity(nodes.len());
        for n in nodes {
            if map.contains_key(&n.id) {
                return Err(schema("unique ids", format!("node {} appears twice", n.id)));
            }
            map.insert(n.id.clone(), n);
        }
        let tree = FeatureTree {
            nodes: map,
            top_ids,
            library_size,
            config_fingerprint,
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &FeatureNode> {
        self.nodes.values()
    }

    pub fn node(&self, id: &str) -> Option<&FeatureNode> {
        self.nodes.get(id)
    }

    pub fn top_ids(&self) -> &[String] {
        &self.top_ids
    }

    pub fn library_size(&self) -> usize {
        self.library_size
    }

    pub fn config_fingerprint(&self) -> &str {
        &self.config_fingerprint
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn max_level(&self) -> usize {
        self.nodes.values().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn layer_count(&self) -> usize {
        if self.nodes.is_empty() {
            0
        } else {
            self.max_level() + 1
        }
    }

    /// Nodes of one level in tree order.
    pub fn level(&self, level: usize) -> Vec<&FeatureNode> {
        self.nodes.values().filter(|n| n.level == level).collect()
    }

    pub fn leaves(&self) -> Vec<&FeatureNode> {
        self.level(0)
    }

    pub fn children_of(&self, id: &str) -> Vec<&FeatureNode> {
        self.nodes
            .get(id)
            .map(|n| n.children.iter().filter_map(|c| self.nodes.get(c)).collect())
            .unwrap_or_default()
    }

    /// Child id → parent id.
    pub fn parent_map(&self) -> HashMap<&str, &str> {
        let mut out = HashMap::new();
        for n in self.nodes.values() {
            for c in &n.children {
                out.insert(c.as_str(), n.id.as_str());
            }
        }
        out
    }

    /// Node ids from a top node down to `id`.
    pub fn path_to(&self, id: &str) -> Vec<String> {
        let parents = self.parent_map();
        let mut path = vec![id.to_string()];
        let mut cur = id;
        while let Some(&p) = parents.get(cur) {
            path.push(p.to_string());
            cur = p;
        }
        path.reverse();
        path
    }

    /// Leaf nodes under `id`, in tree order.
    pub fn leaves_under(&self, id: &str) -> Vec<&FeatureNode> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            let Some(n) = self.nodes.get(cur) else { continue };
            if n.is_leaf() {
                out.push(n);
            } else {
                stack.extend(n.children.iter().rev().map(String::as_str));
            }
        }
        out
    }

    pub fn stats(&self) -> TreeStats {
        tree_stats(self)
    }

    /// Checks every structural invariant; the error names the first one
    /// violated.
    pub fn validate(&self) -> Result<(), TreeError> {
        for n in self.nodes.values() {
            let leaf_shape = n.level == 0;
            if leaf_shape != n.artifact_id.is_some() || leaf_shape != n.children.is_empty() {
                return Err(schema(
                    "node shape",
                    format!("node {} at level {} must have an artifact id exactly when it has no children", n.id, n.level),
                ));
            }
        }
        let mut parent_of: HashMap<&str, &str> = HashMap::new();
        for n in self.nodes.values() {
            for c in &n.children {
                let child = self
                    .nodes
                    .get(c)
                    .ok_or_else(|| schema("dangling child", format!("{} lists unknown child {c}", n.id)))?;
                if child.level + 1 != n.level {
                    return Err(schema(
                        "level structure",
                        format!("child {c} (level {}) under {} (level {})", child.level, n.id, n.level),
                    ));
                }
                if let Some(prev) = parent_of.insert(c.as_str(), n.id.as_str()) {
                    return Err(schema("single parent", format!("node {c} has parents {prev} and {}", n.id)));
                }
            }
        }
        let max_level = self.max_level();
        let mut tops = HashSet::new();
        for t in &self.top_ids {
            let node = self
                .nodes
                .get(t)
                .ok_or_else(|| schema("top set", format!("unknown top id {t}")))?;
            if node.level != max_level {
                return Err(schema("top set", format!("top node {t} is not at level {max_level}")));
            }
            if !tops.insert(t.as_str()) {
                return Err(schema("top set", format!("top id {t} listed twice")));
            }
        }
        for n in self.nodes.values() {
            if !parent_of.contains_key(n.id.as_str()) && !tops.contains(n.id.as_str()) {
                return Err(schema("single parent", format!("node {} has no parent and is not a top node", n.id)));
            }
            if parent_of.contains_key(n.id.as_str()) && tops.contains(n.id.as_str()) {
                return Err(schema("top set", format!("top node {} has a parent", n.id)));
            }
        }
        let mut artifacts = HashSet::new();
        let mut leaves = 0;
        for n in self.nodes.values().filter(|n| n.is_leaf()) {
            leaves += 1;
            let a = n.artifact_id.as_deref().unwrap_or_default();
            if !artifacts.insert(a) {
                return Err(schema("leaf bijection", format!("artifact {a} has two leaves")));
            }
        }
        if leaves != self.library_size {
            return Err(schema(
                "leaf bijection",
                format!("{leaves} leaves for a library of {} artifacts", self.library_size),
            ));
        }
        let mut counts = vec![0usize; max_level + 1];
        for n in self.nodes.values() {
            counts[n.level] += 1;
        }
        if let Some(w) = counts.windows(2).find(|w| w[1] >= w[0]) {
            return Err(schema("strict reduction", format!("level sizes {} then {}", w[0], w[1])));
        }
        Ok(())
    }

    /// Also checks that the leaves are exactly the library's artifacts.
    pub fn validate_against(&self, library: &ArtifactLibrary) -> Result<(), TreeError> {
        self.validate()?;
        if library.len() != self.library_size {
            return Err(schema(
                "leaf bijection",
                format!("tree covers {} artifacts, library has {}", self.library_size, library.len()),
            ));
        }
        for leaf in self.leaves() {
            let a = leaf.artifact_id.as_deref().unwrap_or_default();
            if !library.contains_id(a) {
                return Err(schema("leaf bijection", format!("leaf {} names unknown artifact {a}", leaf.id)));
            }
        }
        Ok(())
    }
}

pub fn tree_stats(tree: &FeatureTree) -> TreeStats {
    let leaves = tree.nodes().filter(|n| n.is_leaf()).count();
    TreeStats {
        layers_with_leaves: tree.layer_count(),
        feature_layers: tree.layer_count().saturating_sub(1),
        node_count: tree.node_count(),
        feature_node_count: tree.node_count() - leaves,
        top_count: tree.top_ids().len(),
    }
}

/// When to stop recursing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopCriteria {
    /// Never create a level with fewer nodes than this.
    pub min_top_count: usize,
    /// Maximum number of feature levels above the leaves.
    pub max_depth: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            min_top_count: 4,
            max_depth: 6,
        }
    }
}

impl StopCriteria {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.min_top_count < 2 {
            return Err(TreeError::InvalidConfig("min_top_count must be at least 2".into()));
        }
        if self.max_depth < 1 {
            return Err(TreeError::InvalidConfig("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// What the next level clusters on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NextLevelMode {
    /// Embed the summarized parent descriptions afresh.
    #[default]
    Reembed,
    /// Represent each parent by the mean of its children's vectors.
    CentroidMean,
}

/// Serializable description of where summaries come from; the runtime
/// summarizer is built from it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SummarizerSpec {
    #[default]
    Mock,
    Remote {
        model: String,
        #[serde(default = "default_summary_retries")]
        max_retries: u32,
    },
}

fn default_summary_retries() -> u32 {
    2
}

/// One (embedder, algorithm, cluster-number method) solution plus the knobs
/// that make its tree reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionConfig {
    pub embedder: EmbedderConfig,
    pub algo: ClusterAlgo,
    pub cn: CnMethod,
    #[serde(default)]
    pub summarizer: SummarizerSpec,
    #[serde(default)]
    pub stop: StopCriteria,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub cut: CutRule,
    #[serde(default)]
    pub next_level: NextLevelMode,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_seed() -> u64 {
    42
}
fn default_max_iter() -> usize {
    300
}
fn default_tol() -> f64 {
    1e-6
}

impl SolutionConfig {
    /// Defaults for everything but the three technique choices.
    pub fn new(embedder: EmbedderConfig, algo: ClusterAlgo, cn: CnKind) -> Self {
        SolutionConfig {
            embedder,
            algo,
            cn: CnMethod::with_defaults(cn),
            summarizer: SummarizerSpec::Mock,
            stop: StopCriteria::default(),
            seed: default_seed(),
            cut: CutRule::default(),
            next_level: NextLevelMode::Reembed,
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if !is_compatible(self.algo, self.cn.kind) {
            return Err(TreeError::IncompatibleSolution {
                algo: self.algo,
                cn: self.cn.kind,
            });
        }
        self.stop.validate()?;
        self.embedder.validate()?;
        let f = self.cut.distance_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(TreeError::Cluster(ClusterError::InvalidCut(f)));
        }
        if self.cn.kind != CnKind::None && self.cn.k_min > self.cn.k_max {
            return Err(TreeError::InvalidConfig(format!(
                "k_min {} exceeds k_max {}",
                self.cn.k_min, self.cn.k_max
            )));
        }
        if self.max_iter == 0 || !(self.tol >= 0.0) {
            return Err(TreeError::InvalidConfig("max_iter must be positive and tol non-negative".into()));
        }
        Ok(())
    }

    /// Hash of every setting that can change the built tree.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.embedder.cache_path = None;
        sha256_hex(&serde_json::to_string(&canonical).expect("config serializes"))
    }

    /// `embedder/algo/cn`, e.g. `tfidf/kmeans/silhouette`.
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.embedder.label(), self.algo, self.cn.kind)
    }
}

/// Every compatible solution over `embedders`, in (embedder, algorithm,
/// method) order, each built on `base` settings.
pub fn enumerate_solutions(embedders: &[EmbedderConfig], base: &SolutionConfig) -> Vec<SolutionConfig> {
    let mut out = Vec::new();
    for e in embedders {
        for (algo, cn) in crate::cluster::compatible_pairs() {
            let mut c = base.clone();
            c.embedder = e.clone();
            c.algo = algo;
            c.cn = CnMethod { kind: cn, ..base.cn };
            out.push(c);
        }
    }
    out
}
