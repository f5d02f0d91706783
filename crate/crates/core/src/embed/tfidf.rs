use std::collections::{BTreeSet, HashMap};

use super::{EmbedError, EmbeddingMatrix};
use crate::text::tokenize;

/// Fitted TF-IDF vocabulary and smoothed inverse document frequencies.
///
/// `tf = count / doc_tokens`, `idf = ln((1 + N) / (1 + df)) + 1`, rows are
/// L2-normalized when non-zero. Terms are kept in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfModel {
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<f64>,
}

impl TfIdfModel {
    pub fn fit<S: AsRef<str>>(texts: &[S]) -> Result<Self, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyCorpus);
        }
        let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
        let vocabulary: Vec<String> = docs
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(Self::from_docs(&docs, vocabulary))
    }

    /// Fits idf over `texts` but only for the given terms.
    pub fn fit_with_vocabulary<S: AsRef<str>>(
        texts: &[S],
        vocabulary: &[String],
    ) -> Result<Self, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyCorpus);
        }
        let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
        let vocabulary: Vec<String> = vocabulary
            .iter()
            .map(|t| t.to_lowercase())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(Self::from_docs(&docs, vocabulary))
    }

    fn from_docs(docs: &[Vec<String>], vocabulary: Vec<String>) -> Self {
        let index: HashMap<String, usize> = vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let mut df = vec![0usize; vocabulary.len()];
        for doc in docs {
            let seen: BTreeSet<usize> = doc.iter().filter_map(|t| index.get(t).copied()).collect();
            for i in seen {
                df[i] += 1;
            }
        }
        let n = docs.len() as f64;
        let idf = df
            .iter()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        TfIdfModel {
            vocabulary,
            index,
            idf,
        }
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index.get(term).map(|&i| self.idf[i])
    }

    /// Output dimension; at least 1 so an all-empty corpus still yields
    /// well-formed (zero) rows.
    pub fn dim(&self) -> usize {
        self.vocabulary.len().max(1)
    }

    /// Un-normalized TF-IDF weights of `text`.
    pub fn transform_raw(&self, text: &str) -> Vec<f64> {
        let tokens = tokenize(text);
        let mut row = vec![0.0; self.dim()];
        if tokens.is_empty() {
            return row;
        }
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for t in &tokens {
            if let Some(&i) = self.index.get(t) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let total = tokens.len() as f64;
        for (i, c) in counts {
            row[i] = (c as f64 / total) * self.idf[i];
        }
        row
    }

    /// L2-normalized TF-IDF row (zero row stays zero).
    pub fn transform(&self, text: &str) -> Vec<f64> {
        let mut row = self.transform_raw(text);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
        row
    }
}

/// Fits TF-IDF on `texts` and returns one normalized row per text, ids `0..n`.
pub fn tfidf_fit_transform<S: AsRef<str>>(texts: &[S]) -> Result<EmbeddingMatrix, EmbedError> {
    let model = TfIdfModel::fit(texts)?;
    let rows = texts.iter().map(|t| model.transform(t.as_ref())).collect();
    EmbeddingMatrix::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::cosine_slices;
    use proptest::prelude::*;

    #[test]
    fn empty_corpus_is_an_error() {
        let empty: [&str; 0] = [];
        assert_eq!(tfidf_fit_transform(&empty).unwrap_err(), EmbedError::EmptyCorpus);
    }

    #[test]
    fn identical_documents_give_identical_rows() {
        let m = tfidf_fit_transform(&["web server", "web server"]).unwrap();
        assert_eq!(m.row(0), m.row(1));
        assert_eq!(cosine_slices(m.row(0), m.row(1)), 1.0);
    }

    #[test]
    fn disjoint_documents_are_orthogonal() {
        let m = tfidf_fit_transform(&["web server httpd", "text editor vim"]).unwrap();
        assert_eq!(cosine_slices(m.row(0), m.row(1)), 0.0);
    }

    #[test]
    fn hand_computed_two_document_weights() {
        // Independent arithmetic: tf = 1/2 for every term; idf(a) = ln(3/3) + 1,
        // idf(b) = ln(3/2) + 1.
        let w_a = 0.5 * 1.0;
        let w_b = 0.5 * ((3.0f64 / 2.0).ln() + 1.0);
        let norm = (w_a * w_a + w_b * w_b).sqrt();
        let model = TfIdfModel::fit(&["a b", "a c"]).unwrap();
        assert_eq!(model.vocabulary(), ["a", "b", "c"]);
        assert!((model.idf("a").unwrap() - 1.0).abs() < 1e-12);
        assert!((model.idf("b").unwrap() - 1.405_465_108_108_164_4).abs() < 1e-12);
        let raw = model.transform_raw("a b");
        assert!((raw[0] - 0.5).abs() < 1e-9);
        assert!((raw[1] - 0.702_732_554_054_082_2).abs() < 1e-9);
        let row = model.transform("a b");
        assert!((row[0] - w_a / norm).abs() < 1e-9);
        assert!((row[1] - w_b / norm).abs() < 1e-9);
        assert!((row[0] - 0.580).abs() < 5e-4 && (row[1] - 0.815).abs() < 5e-4);
        assert_eq!(row[2], 0.0);
    }

    #[test]
    fn frozen_vocabulary_ignores_unknown_terms() {
        let vocab = vec!["b".to_string(), "a".to_string()];
        let model = TfIdfModel::fit_with_vocabulary(&["a b zzz"], &vocab).unwrap();
        assert_eq!(model.vocabulary(), ["a", "b"]);
        let raw = model.transform_raw("a zzz");
        // tf divides by all tokens, known or not
        assert!((raw[0] - 0.5 * model.idf("a").unwrap()).abs() < 1e-12);
    }

    #[test]
    fn all_empty_corpus_yields_zero_rows() {
        let m = tfidf_fit_transform(&["", "..."]).unwrap();
        assert_eq!(m.dim(), 1);
        assert!(m.rows().all(|r| r.iter().all(|&x| x == 0.0)));
    }

    proptest! {
        #[test]
        fn permutation_permutes_rows(
            docs in prop::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,4}", 2..8),
            rot in 0usize..8,
        ) {
            let n = docs.len();
            let rot = rot % n;
            let mut rotated = docs.clone();
            rotated.rotate_left(rot);
            let a = tfidf_fit_transform(&docs).unwrap();
            let b = tfidf_fit_transform(&rotated).unwrap();
            prop_assert_eq!(a.dim(), b.dim());
            for i in 0..n {
                prop_assert_eq!(a.row((i + rot) % n), b.row(i));
            }
        }

        #[test]
        fn nonzero_rows_have_unit_norm(docs in prop::collection::vec("[a-z ]{0,20}", 1..10)) {
            let m = tfidf_fit_transform(&docs).unwrap();
            for row in m.rows() {
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
            }
        }
    }
}
