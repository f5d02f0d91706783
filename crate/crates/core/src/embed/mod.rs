//! Text embedding: native TF-IDF and remote embedding services.

mod remote;
mod tfidf;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{EmbeddingProvider, JsonlStore, ProviderError};

pub use remote::{remote_embed, EmbeddingCacheRecord, HashingEmbeddingProvider};
pub use tfidf::{tfidf_fit_transform, TfIdfModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("cannot embed an empty corpus")]
    EmptyCorpus,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("{rows} rows but {ids} row ids")]
    MisalignedIds { rows: usize, ids: usize },
    #[error("invalid embedder configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// A single finite, fixed-dimension vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }
}

/// Row-major matrix of embeddings with one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f64>,
    row_ids: Vec<String>,
}

impl EmbeddingMatrix {
    /// Rows labelled `0..n`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, EmbedError> {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::with_ids(rows, ids)
    }

    pub fn with_ids(rows: Vec<Vec<f64>>, row_ids: Vec<String>) -> Result<Self, EmbedError> {
        if rows.len() != row_ids.len() {
            return Err(EmbedError::MisalignedIds {
                rows: rows.len(),
                ids: row_ids.len(),
            });
        }
        let dim = rows.first().map(Vec::len).ok_or(EmbedError::EmptyCorpus)?;
        if dim == 0 {
            return Err(EmbedError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(EmbedError::NonFinite);
            }
            data.extend(row);
        }
        Ok(EmbeddingMatrix { dim, data, row_ids })
    }

    pub fn from_vectors(rows: Vec<EmbeddingVector>, row_ids: Vec<String>) -> Result<Self, EmbedError> {
        Self::with_ids(rows.into_iter().map(|v| v.0).collect(), row_ids)
    }

    pub fn nrows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn vector(&self, i: usize) -> EmbeddingVector {
        EmbeddingVector(self.row(i).to_vec())
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// Copies the selected rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            dim: self.dim,
            data,
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity clamped to [-1, 1]; 0 when either vector is zero.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, EmbedError> {
    if u.dim() != v.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    Ok(cosine_slices(u.values(), v.values()))
}

pub(crate) fn cosine_slices(u: &[f64], v: &[f64]) -> f64 {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Tfidf,
    Remote,
}

/// Which embedding technique to use and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub model: String,
    /// Frozen term list for TF-IDF; `None` learns it from the corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_path: Option<PathBuf>,
    /// L2-normalize remote vectors before use.
    #[serde(default)]
    pub normalize: bool,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_batch_size() -> usize {
    64
}

/// The sentence-embedding and LLM-embedding models compared against TF-IDF.
pub const NEURAL_MODELS: [&str; 3] = [
    "all-MiniLM-L6-v2",
    "all-mpnet-base-v2",
    "text-embedding-ada-002",
];

impl EmbedderConfig {
    pub fn tfidf() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Tfidf,
            model: String::new(),
            vocabulary: None,
            cache_path: None,
            normalize: false,
            batch_size: default_batch_size(),
        }
    }

    pub fn remote(model: impl Into<String>) -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Remote,
            model: model.into(),
            ..Self::tfidf()
        }
    }

    /// TF-IDF followed by the three neural models.
    pub fn standard_set() -> Vec<EmbedderConfig> {
        std::iter::once(Self::tfidf())
            .chain(NEURAL_MODELS.iter().map(|m| Self::remote(*m)))
            .collect()
    }

    /// Short display name: `tfidf` or the remote model name.
    pub fn label(&self) -> String {
        match self.kind {
            EmbedderKind::Tfidf => "tfidf".to_string(),
            EmbedderKind::Remote => self.model.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.kind == EmbedderKind::Remote && self.model.trim().is_empty() {
            return Err(EmbedError::InvalidConfig("remote embedder requires a model".into()));
        }
        if self.batch_size == 0 {
            return Err(EmbedError::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// A configured embedder plus the runtime handles it needs.
#[derive(Clone)]
pub struct Embedder {
    config: EmbedderConfig,
    provider: Option<Arc<dyn EmbeddingProvider>>,
    cache: Option<Arc<JsonlStore<EmbeddingCacheRecord>>>,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("config", &self.config)
            .field("provider", &self.provider.as_ref().map(|p| p.model().to_string()))
            .finish()
    }
}

impl Embedder {
    /// Opens the cache file named in the config, if any.
    pub fn new(config: EmbedderConfig) -> Result<Self, EmbedError> {
        config.validate()?;
        let cache = match &config.cache_path {
            Some(path) if config.kind == EmbedderKind::Remote => {
                Some(Arc::new(JsonlStore::open(path)?))
            }
            _ => None,
        };
        Ok(Embedder {
            config,
            provider: None,
            cache,
        })
    }

    pub fn tfidf() -> Self {
        Embedder {
            config: EmbedderConfig::tfidf(),
            provider: None,
            cache: None,
        }
    }

    pub fn with_provider(mut self, provider: Arc<dyn EmbeddingProvider>) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    /// Embeds `texts`, labelling rows with `ids`.
    pub fn embed(&self, ids: &[String], texts: &[String]) -> Result<EmbeddingMatrix, EmbedError> {
        if ids.len() != texts.len() {
            return Err(EmbedError::MisalignedIds {
                rows: texts.len(),
                ids: ids.len(),
            });
        }
        let rows = match self.config.kind {
            EmbedderKind::Tfidf => {
                let model = match &self.config.vocabulary {
                    Some(vocab) => TfIdfModel::fit_with_vocabulary(texts, vocab)?,
                    None => TfIdfModel::fit(texts)?,
                };
                texts.iter().map(|t| model.transform(t)).collect()
            }
            EmbedderKind::Remote => remote_embed(
                texts,
                &self.config,
                self.provider.as_deref(),
                self.cache.as_deref(),
            )?,
        };
        EmbeddingMatrix::with_ids(rows, ids.to_vec())
    }
}
