//! Requirement-to-artifact evaluation: dataset loading, tree-guided and flat
//! recommendation, precision reports and the solution matrix.

mod matrix;
mod recommend;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbedError;
use crate::ingest::ArtifactLibrary;
use crate::metrics::precision;
use crate::provider::ProviderError;
use crate::tree::FeatureTree;

pub use matrix::{run_matrix, run_matrix_with, MatrixOptions, MatrixReport, MatrixRow};
pub use recommend::{
    parse_choice, recommend_flat, recommend_with_tree, render_choice_prompt, render_whole_tree_prompt, Guide,
    RemoteGuideMode,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{path}: {message}")]
    Io { path: std::path::PathBuf, message: String },
    #[error("invalid dataset: {0}")]
    Schema(String),
    #[error("gold artifact `{0}` is not in the library")]
    UnresolvedGoldId(String),
    #[error("the tree has no nodes")]
    EmptyTree,
    #[error("the library has no artifacts")]
    EmptyLibrary,
    #[error("the dataset has no samples")]
    EmptyDataset,
    #[error("beam width must be at least 1")]
    InvalidBeam,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// One requirement and the artifacts that satisfy it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtSelSample {
    pub requirement: String,
    pub gold: Vec<String>,
}

#[derive(Deserialize)]
struct ArtSelDocument {
    samples: Vec<ArtSelSample>,
}

/// Parses an ArtSel document and checks every gold id against `library`.
/// Duplicate gold ids collapse to one.
pub fn parse_artsel(text: &str, library: &ArtifactLibrary) -> Result<Vec<ArtSelSample>, EvalError> {
    let doc: ArtSelDocument = serde_json::from_str(text).map_err(|e| EvalError::Schema(e.to_string()))?;
    let mut out = Vec::with_capacity(doc.samples.len());
    for (i, mut s) in doc.samples.into_iter().enumerate() {
        if s.requirement.trim().is_empty() {
            return Err(EvalError::Schema(format!("sample {i} has an empty requirement")));
        }
        if s.gold.is_empty() {
            return Err(EvalError::Schema(format!("sample {i} has no gold artifacts")));
        }
        let mut seen = std::collections::HashSet::new();
        s.gold.retain(|g| seen.insert(g.clone()));
        if let Some(missing) = s.gold.iter().find(|g| !library.contains_id(g)) {
            return Err(EvalError::UnresolvedGoldId(missing.clone()));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn load_artsel(path: &Path, library: &ArtifactLibrary) -> Result<Vec<ArtSelSample>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_artsel(&text, library)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub requirement: String,
    pub gold: Vec<String>,
    pub recommended: Vec<String>,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub mean_precision: f64,
    pub samples: Vec<SampleResult>,
    /// Not deterministic; left out of the JSON report.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl EvalReport {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn evaluate_by(
    method: String,
    dataset: &[ArtSelSample],
    mut recommend: impl FnMut(&str, usize) -> Result<Vec<String>, EvalError>,
) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let start = Instant::now();
    let mut samples = Vec::with_capacity(dataset.len());
    for s in dataset {
        let mut recommended = recommend(&s.requirement, s.gold.len())?;
        recommended.truncate(s.gold.len());
        let p = precision(&recommended, &s.gold);
        samples.push(SampleResult {
            requirement: s.requirement.clone(),
            gold: s.gold.clone(),
            recommended,
            precision: p,
        });
    }
    let mean_precision = samples.iter().map(|r| r.precision).sum::<f64>() / samples.len() as f64;
    Ok(EvalReport {
        method,
        mean_precision,
        samples,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Mean precision of tree-guided recommendation, taking as many
/// recommendations per sample as it has gold artifacts.
pub fn evaluate(dataset: &[ArtSelSample], tree: &FeatureTree, guide: &Guide, beam: usize) -> Result<EvalReport, EvalError> {
    evaluate_by(format!("tree/{}/beam={beam}", guide.label()), dataset, |req, _| {
        recommend_with_tree(req, tree, guide, beam)
    })
}

/// Same as [`evaluate`] but ranking the whole library without a tree.
pub fn evaluate_flat(dataset: &[ArtSelSample], library: &ArtifactLibrary, guide: &Guide) -> Result<EvalReport, EvalError> {
    evaluate_by(format!("flat/{}", guide.label()), dataset, |req, k| {
        recommend_flat(req, library, guide, k)
    })
}
