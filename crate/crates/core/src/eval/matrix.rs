use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterAlgo, CnKind};
use crate::embed::{EmbedError, Embedder, EmbedderConfig};
use crate::ingest::ArtifactLibrary;
use crate::metrics::{score_tree, GVALUE_FORMULA_NOTE};
use crate::summarize::Summarizer;
use crate::tree::{build_tree_with, enumerate_solutions, SolutionConfig, TreeError};

/// One solution's outcome. Failed rows carry the error and no numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub embedder: String,
    pub algo: ClusterAlgo,
    pub cn: CnKind,
    pub layers: Option<usize>,
    pub nodes: Option<usize>,
    pub feature_layers: Option<usize>,
    pub feature_nodes: Option<usize>,
    pub silhouette: Option<f64>,
    pub gvalue_surrogate: Option<f64>,
    #[serde(skip)]
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl MatrixRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub rows: Vec<MatrixRow>,
    pub gvalue_formula_note: String,
}

impl MatrixReport {
    /// Deterministic JSON (wall times are left out).
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }

    /// Aligned text table: ET, CA, CN, #L, #N, SS, GS, then time and status.
    pub fn to_table(&self) -> String {
        let header = ["ET", "CA", "CN", "#L", "#N", "SS", "GS", "time_s", "status"];
        let opt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
        let optf = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        let body: Vec<[String; 9]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.embedder.clone(),
                    r.algo.to_string(),
                    r.cn.to_string(),
                    opt(r.layers),
                    opt(r.nodes),
                    optf(r.silhouette),
                    optf(r.gvalue_surrogate),
                    format!("{:.2}", r.wall_time_s),
                    r.error.as_ref().map_or("ok".to_string(), |e| format!("failed: {e}")),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row.iter()).take(8) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut s = String::new();
        let line = |cells: Vec<&str>, s: &mut String| {
            let mut out = String::new();
            for (i, c) in cells.iter().enumerate() {
                if i + 1 == cells.len() {
                    out.push_str(c);
                } else {
                    let _ = write!(out, "{c:<w$}  ", w = widths[i]);
                }
            }
            s.push_str(out.trim_end());
            s.push('\n');
        };
        line(header.to_vec(), &mut s);
        for row in &body {
            line(row.iter().map(String::as_str).collect(), &mut s);
        }
        let _ = writeln!(s, "\nGS: {GVALUE_FORMULA_NOTE}");
        s
    }
}

/// Settings shared by every row.
#[derive(Debug, Clone)]
pub struct MatrixOptions {
    pub base: SolutionConfig,
    pub embedders: Vec<EmbedderConfig>,
    /// Embedder used to score every tree, so rows are comparable.
    pub metric_embedder: EmbedderConfig,
}

impl MatrixOptions {
    pub fn new(base: SolutionConfig) -> Self {
        MatrixOptions {
            base,
            embedders: EmbedderConfig::standard_set(),
            metric_embedder: EmbedderConfig::tfidf(),
        }
    }
}

/// All 24 solutions with the offline summarizer; remote embedders are built
/// from their configuration and rely on cached vectors.
pub fn run_matrix(library: &ArtifactLibrary, base: &SolutionConfig) -> MatrixReport {
    run_matrix_with(library, &MatrixOptions::new(base.clone()), &|c| Embedder::new(c.clone()), &Summarizer::Mock)
}

/// Builds and scores every compatible solution in parallel. A failing row
/// records its error; the others still run.
pub fn run_matrix_with(
    library: &ArtifactLibrary,
    options: &MatrixOptions,
    embedder_for: &(dyn Fn(&EmbedderConfig) -> Result<Embedder, EmbedError> + Sync),
    summarizer: &Summarizer,
) -> MatrixReport {
    let solutions = enumerate_solutions(&options.embedders, &options.base);
    let rows = solutions
        .par_iter()
        .map(|config| {
            let start = Instant::now();
            let result = (|| -> Result<_, String> {
                let embedder = embedder_for(&config.embedder).map_err(|e| e.to_string())?;
                let outcome = build_tree_with(library, config, &embedder, summarizer).map_err(|e: TreeError| e.to_string())?;
                let metric_embedder = embedder_for(&options.metric_embedder).map_err(|e| e.to_string())?;
                let report = score_tree(&outcome.tree, &metric_embedder).map_err(|e| e.to_string())?;
                Ok((outcome.tree.stats(), report))
            })();
            let mut row = MatrixRow {
                embedder: config.embedder.label(),
                algo: config.algo,
                cn: config.cn.kind,
                layers: None,
                nodes: None,
                feature_layers: None,
                feature_nodes: None,
                silhouette: None,
                gvalue_surrogate: None,
                wall_time_s: 0.0,
                error: None,
            };
            match result {
                Ok((stats, report)) => {
                    row.layers = Some(stats.layers_with_leaves);
                    row.nodes = Some(stats.node_count);
                    row.feature_layers = Some(stats.feature_layers);
                    row.feature_nodes = Some(stats.feature_node_count);
                    row.silhouette = Some(report.silhouette);
                    row.gvalue_surrogate = Some(report.gvalue_surrogate);
                }
                Err(e) => {
                    log::warn!("{} failed: {e}", config.label());
                    row.error = Some(e);
                }
            }
            row.wall_time_s = start.elapsed().as_secs_f64();
            row
        })
        .collect();
    MatrixReport {
        rows,
        gvalue_formula_note: GVALUE_FORMULA_NOTE.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Artifact, Provenance};

    fn lib() -> ArtifactLibrary {
        ArtifactLibrary::from_artifacts(
            (0..12)
                .map(|i| Artifact {
                    id: format!("a{i}"),
                    name: format!("A{i}"),
                    description: format!("topic{} word{} extra{}", i % 4, i % 3, i),
                    provenance: vec![Provenance {
                        source: "t".into(),
                        raw_id: i.to_string(),
                    }],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn tfidf_only_matrix_has_six_rows() {
        let base = SolutionConfig::new(EmbedderConfig::tfidf(), ClusterAlgo::Kmeans, CnKind::Elbow);
        let mut options = MatrixOptions::new(base);
        options.embedders = vec![EmbedderConfig::tfidf()];
        let r = run_matrix_with(&lib(), &options, &|c| Embedder::new(c.clone()), &Summarizer::Mock);
        assert_eq!(r.rows.len(), 6);
        assert_eq!(r.failed_rows(), 0);
        let table = r.to_table();
        assert!(table.lines().next().unwrap().starts_with("ET     CA"));
        assert_eq!(table.lines().count(), 1 + 6 + 2);
    }

    #[test]
    fn uncached_remote_rows_fail_in_row() {
        let base = SolutionConfig::new(EmbedderConfig::tfidf(), ClusterAlgo::Kmeans, CnKind::Elbow);
        let r = run_matrix(&lib(), &base);
        assert_eq!(r.rows.len(), 24);
        assert_eq!(r.failed_rows(), 18);
        assert!(r.rows[..6].iter().all(|row| !row.failed()));
    }
}
