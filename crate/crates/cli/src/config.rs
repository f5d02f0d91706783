use std::path::{Path, PathBuf};

use ftb_core::cluster::{ClusterAlgo, CnKind};
use ftb_core::embed::EmbedderConfig;
use ftb_core::ingest::RepoSource;
use ftb_core::tree::SolutionConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a command needs, loadable from a JSON file. Command-line flags
/// override whatever the file sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub sources: Vec<RepoSource>,
    pub solution: SolutionConfig,
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Worker threads; `None` lets the pool decide.
    pub jobs: Option<usize>,
    /// Description similarity at which two artifacts are merged.
    pub similarity_threshold: f64,
    pub fetch_timeout_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sources: Vec::new(),
            solution: SolutionConfig::new(EmbedderConfig::tfidf(), ClusterAlgo::Kmeans, CnKind::Silhouette),
            seed: 42,
            cache_dir: None,
            output_dir: PathBuf::from("out"),
            jobs: None,
            similarity_threshold: 0.9,
            fetch_timeout_s: 30.0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// `cache_dir`, defaulting to `<output_dir>/cache`.
    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    /// The solution with the run-level seed applied.
    pub fn resolved_solution(&self) -> SolutionConfig {
        let mut s = self.solution.clone();
        s.seed = self.seed;
        s
    }
}

/// `tfidf` or `remote:<model>`.
pub fn parse_embedder(text: &str) -> Result<EmbedderConfig, String> {
    match text.split_once(':') {
        None if text.eq_ignore_ascii_case("tfidf") => Ok(EmbedderConfig::tfidf()),
        Some((kind, model)) if kind.eq_ignore_ascii_case("remote") && !model.trim().is_empty() => {
            Ok(EmbedderConfig::remote(model.trim()))
        }
        _ => Err(format!("expected `tfidf` or `remote:<model>`, got `{text}`")),
    }
}

/// `mock` or `remote:<model>`; `None` means the mock.
pub fn parse_model_choice(text: &str) -> Result<Option<String>, String> {
    match text.split_once(':') {
        None if text.eq_ignore_ascii_case("mock") => Ok(None),
        Some((kind, model)) if kind.eq_ignore_ascii_case("remote") && !model.trim().is_empty() => {
            Ok(Some(model.trim().to_string()))
        }
        _ => Err(format!("expected `mock` or `remote:<model>`, got `{text}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 7, "output_dir": "x"}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.cache_dir(), PathBuf::from("x/cache"));
        assert_eq!(c.solution.algo, ClusterAlgo::Kmeans);
        assert_eq!(c.resolved_solution().seed, 7);
    }

    #[test]
    fn embedder_and_model_flags() {
        assert_eq!(parse_embedder("tfidf").unwrap(), EmbedderConfig::tfidf());
        assert_eq!(parse_embedder("remote:all-mpnet-base-v2").unwrap().model, "all-mpnet-base-v2");
        assert!(parse_embedder("remote:").is_err());
        assert!(parse_embedder("bert").is_err());
        assert_eq!(parse_model_choice("mock").unwrap(), None);
        assert_eq!(parse_model_choice("remote:gpt-4").unwrap().as_deref(), Some("gpt-4"));
    }
}
