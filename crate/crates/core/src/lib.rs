//! Builds multi-level feature trees from libraries of reusable software
//! artifacts: ingest and deduplicate artifact metadata, embed descriptions,
//! cluster them, summarize each cluster into a parent feature, and recurse.
//! Also scores trees and uses them to recommend artifacts for requirements.

pub mod cluster;
pub mod embed;
pub mod eval;
pub mod ingest;
pub mod metrics;
pub mod provider;
pub mod summarize;
pub mod text;
pub mod tree;

pub use cluster::{ClusterAlgo, ClusterAssignment, CnKind, CnMethod};
pub use embed::{Embedder, EmbedderConfig, EmbeddingMatrix};
pub use eval::{ArtSelSample, EvalReport, Guide, MatrixReport, MatrixRow};
pub use ingest::{Artifact, ArtifactLibrary, ExistsJudge, RepoSource, SourceFormat};
pub use metrics::MetricReport;
pub use summarize::{FeatureSummary, Summarizer};
pub use tree::{FeatureNode, FeatureTree, SolutionConfig, StopCriteria};
