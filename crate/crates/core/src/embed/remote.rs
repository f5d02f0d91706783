use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbedderConfig, EmbedderKind};
use crate::provider::{EmbeddingProvider, JsonlStore, ProviderError};
use crate::text::{sha256_hex, tokenize};

/// One cached vector, keyed by model and text digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCacheRecord {
    pub model: String,
    pub sha256: String,
    pub vector: Vec<f64>,
}

/// Embeds `texts` through `provider`, consulting and filling `cache` first.
///
/// Misses are de-duplicated, split into batches of `config.batch_size`, and
/// requested concurrently; the result is always in input order.
pub fn remote_embed(
    texts: &[String],
    config: &EmbedderConfig,
    provider: Option<&dyn EmbeddingProvider>,
    cache: Option<&JsonlStore<EmbeddingCacheRecord>>,
) -> Result<Vec<Vec<f64>>, EmbedError> {
    if config.kind != EmbedderKind::Remote {
        return Err(EmbedError::InvalidConfig("remote_embed needs a remote embedder".into()));
    }
    config.validate()?;
    if texts.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let digests: Vec<String> = texts.iter().map(|t| sha256_hex(t)).collect();
    let mut known: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut missing: Vec<usize> = Vec::new();
    for (i, digest) in digests.iter().enumerate() {
        if known.contains_key(digest.as_str()) || missing.iter().any(|&m| digests[m] == *digest) {
            continue;
        }
        let hit = cache.and_then(|c| c.find(|r| r.model == config.model && r.sha256 == *digest));
        match hit {
            Some(rec) => {
                known.insert(digest.as_str(), rec.vector);
            }
            None => missing.push(i),
        }
    }

    if !missing.is_empty() {
        let provider = provider.ok_or_else(|| {
            ProviderError::CacheMiss(format!("{} texts for model {}", missing.len(), config.model))
        })?;
        let batches: Vec<&[usize]> = missing.chunks(config.batch_size).collect();
        let fetched: Vec<Vec<Vec<f64>>> = batches
            .par_iter()
            .map(|batch| {
                let inputs: Vec<String> = batch.iter().map(|&i| texts[i].clone()).collect();
                let out = provider.embed_batch(&inputs)?;
                if out.len() != inputs.len() {
                    return Err(EmbedError::from(ProviderError::BadResponse(format!(
                        "{} vectors for {} inputs",
                        out.len(),
                        inputs.len()
                    ))));
                }
                Ok(out)
            })
            .collect::<Result<_, EmbedError>>()?;
        for (batch, vectors) in batches.iter().zip(fetched) {
            for (&i, vector) in batch.iter().zip(vectors) {
                if let Some(c) = cache {
                    c.append(EmbeddingCacheRecord {
                        model: config.model.clone(),
                        sha256: digests[i].clone(),
                        vector: vector.clone(),
                    })?;
                }
                known.insert(digests[i].as_str(), vector);
            }
        }
    }

    let mut rows: Vec<Vec<f64>> = digests.iter().map(|d| known[d.as_str()].clone()).collect();
    let dim = rows[0].len();
    for row in &rows {
        if row.len() != dim || dim == 0 {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
    }
    if config.normalize {
        for row in &mut rows {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
    Ok(rows)
}

/// Offline stand-in for a neural embedding service.
///
/// Tokens are hashed (seeded by the model name) into signed buckets of a
/// fixed-width vector, which is then L2-normalized. Different model names
/// give different, but fully deterministic, geometries.
#[derive(Debug, Clone)]
pub struct HashingEmbeddingProvider {
    model: String,
    dim: usize,
}

impl HashingEmbeddingProvider {
    pub fn new(model: impl Into<String>, dim: usize) -> Self {
        HashingEmbeddingProvider {
            model: model.into(),
            dim: dim.max(1),
        }
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in tokenize(text) {
            let digest = sha256_hex(&format!("{}\u{0}{}", self.model, token));
            let bits = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
            let bucket = (bits % self.dim as u64) as usize;
            let sign = if bits >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for HashingEmbeddingProvider {
    fn model(&self) -> &str {
        &self.model
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Returns the unit basis vector e_i for the i-th distinct text it sees.
    struct BasisStub {
        dim: usize,
        calls: AtomicUsize,
    }

    impl EmbeddingProvider for BasisStub {
        fn model(&self) -> &str {
            "stub"
        }
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(texts
                .iter()
                .map(|t| {
                    let i: usize = t.trim_start_matches('t').parse().unwrap();
                    let mut v = vec![0.0; self.dim];
                    v[i] = 1.0;
                    v
                })
                .collect())
        }
    }

    struct Ragged;
    impl EmbeddingProvider for Ragged {
        fn model(&self) -> &str {
            "ragged"
        }
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
            Ok(texts.iter().enumerate().map(|(i, _)| vec![1.0; i + 1]).collect())
        }
    }

    fn texts(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn stub_basis_vectors_in_order() {
        let stub = BasisStub {
            dim: 4,
            calls: AtomicUsize::new(0),
        };
        let cfg = EmbedderConfig::remote("stub");
        let rows = remote_embed(&texts(3), &cfg, Some(&stub), None).unwrap();
        assert_eq!(rows[0], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(rows[1], vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(rows[2], vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn batching_preserves_order() {
        let stub = BasisStub {
            dim: 10,
            calls: AtomicUsize::new(0),
        };
        let mut cfg = EmbedderConfig::remote("stub");
        cfg.batch_size = 3;
        let rows = remote_embed(&texts(10), &cfg, Some(&stub), None).unwrap();
        assert_eq!(stub.calls.load(Ordering::SeqCst), 4);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row[i], 1.0);
        }
    }

    #[test]
    fn ragged_provider_is_dimension_mismatch() {
        let cfg = EmbedderConfig::remote("ragged");
        let err = remote_embed(&texts(3), &cfg, Some(&Ragged), None).unwrap_err();
        assert!(matches!(err, EmbedError::DimensionMismatch { .. }));
    }

    #[test]
    fn cached_rerun_needs_no_provider() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let cfg = EmbedderConfig::remote("stub");
        let stub = BasisStub {
            dim: 3,
            calls: AtomicUsize::new(0),
        };
        let first = {
            let cache = JsonlStore::open(&path).unwrap();
            remote_embed(&texts(3), &cfg, Some(&stub), Some(&cache)).unwrap()
        };
        let cache = JsonlStore::open(&path).unwrap();
        assert_eq!(cache.len(), 3);
        let second = remote_embed(&texts(3), &cfg, None, Some(&cache)).unwrap();
        assert_eq!(first, second);

        let other_model = EmbedderConfig::remote("other");
        let err = remote_embed(&texts(3), &other_model, None, Some(&cache)).unwrap_err();
        assert!(matches!(err, EmbedError::Provider(ProviderError::CacheMiss(_))));
    }

    #[test]
    fn duplicate_texts_are_requested_once() {
        let stub = BasisStub {
            dim: 2,
            calls: AtomicUsize::new(0),
        };
        let mut cfg = EmbedderConfig::remote("stub");
        cfg.batch_size = 1;
        let input = vec!["t1".to_string(), "t1".to_string(), "t0".to_string()];
        let rows = remote_embed(&input, &cfg, Some(&stub), None).unwrap();
        assert_eq!(stub.calls.load(Ordering::SeqCst), 2);
        assert_eq!(rows[0], rows[1]);
    }

    #[test]
    fn normalize_flag_rescales() {
        struct Twos;
        impl EmbeddingProvider for Twos {
            fn model(&self) -> &str {
                "twos"
            }
            fn embed_batch(&self, t: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
                Ok(t.iter().map(|_| vec![2.0, 0.0]).collect())
            }
        }
        let mut cfg = EmbedderConfig::remote("twos");
        assert_eq!(remote_embed(&texts(1), &cfg, Some(&Twos), None).unwrap()[0], vec![2.0, 0.0]);
        cfg.normalize = true;
        assert_eq!(remote_embed(&texts(1), &cfg, Some(&Twos), None).unwrap()[0], vec![1.0, 0.0]);
    }

    #[test]
    fn hashing_provider_is_deterministic_and_model_dependent() {
        let a = HashingEmbeddingProvider::new("m1", 64);
        let b = HashingEmbeddingProvider::new("m2", 64);
        let t = vec!["web server tools".to_string()];
        assert_eq!(a.embed_batch(&t).unwrap(), a.embed_batch(&t).unwrap());
        assert_ne!(a.embed_batch(&t).unwrap(), b.embed_batch(&t).unwrap());
        let norm: f64 = a.embed_batch(&t).unwrap()[0].iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
