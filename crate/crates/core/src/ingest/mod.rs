//! Repository metadata ingestion and consolidation into an artifact library.

mod comps;
mod fetch;
mod judge;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::ProviderError;
use crate::text::{dedup_id, normalize_name, slugify};

pub use comps::parse_group_metadata;
pub use fetch::{fetch_metadata, FetchOptions};
pub use judge::{
    best_description_match, judge_exists, parse_exists_answer, render_exists_prompt, ExistsJudge,
    DEFAULT_MAX_PROMPT_LIBRARY, DEFAULT_SIMILARITY_THRESHOLD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("malformed metadata: {0}")]
    MalformedMetadata(String),
    #[error("unsupported metadata format `{0}`")]
    UnsupportedFormat(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP status {0}")]
    HttpStatus(u16),
    #[error("request timed out")]
    Timeout,
    #[error("invalid metadata URL `{0}`")]
    InvalidUrl(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("invalid library: {0}")]
    Schema(String),
    #[error("invalid judge configuration: {0}")]
    InvalidJudge(String),
    #[error("no sources given")]
    NoSources,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    CompsXml,
    LibraryJson,
}

impl std::str::FromStr for SourceFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "comps_xml" => Ok(SourceFormat::CompsXml),
            "library_json" => Ok(SourceFormat::LibraryJson),
            other => Err(IngestError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// One repository mirror whose group metadata feeds the library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoSource {
    pub name: String,
    #[serde(default)]
    pub version: String,
    pub metadata_url: String,
    pub format: SourceFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawArtifact {
    pub source_name: String,
    pub raw_id: String,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub raw_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: String,
    pub name: String,
    pub description: String,
    pub provenance: Vec<Provenance>,
}

/// Deduplicated artifacts in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArtifactLibrary {
    artifacts: Vec<Artifact>,
    position: HashMap<String, usize>,
    name_index: HashMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct LibraryDocument {
    artifacts: Vec<Artifact>,
}

/// What happened to one raw artifact during a merge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergeOutcome {
    Added(String),
    Matched(String),
}

impl MergeOutcome {
    pub fn id(&self) -> &str {
        match self {
            MergeOutcome::Added(id) | MergeOutcome::Matched(id) => id,
        }
    }
}

impl ArtifactLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    pub fn len(&self) -> usize {
        self.artifacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.artifacts.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Artifact> {
        self.position.get(id).map(|&i| &self.artifacts[i])
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.position.contains_key(id)
    }

    /// Id of the first artifact whose normalized name is `normalized`.
    pub fn id_for_name(&self, normalized: &str) -> Option<&str> {
        self.name_index.get(normalized).map(String::as_str)
    }

    /// Appends `raw` as a new artifact and returns its id.
    pub fn insert_new(&mut self, raw: &RawArtifact) -> String {
        let base = slugify(&raw.name, "artifact");
        let id = dedup_id(&base, |c| self.position.contains_key(c));
        self.push(Artifact {
            id: id.clone(),
            name: raw.name.trim().to_string(),
            description: raw.description.trim().to_string(),
            provenance: vec![Provenance {
                source: raw.source_name.clone(),
                raw_id: raw.raw_id.clone(),
            }],
        });
        id
    }

    fn push(&mut self, artifact: Artifact) {
        self.position.insert(artifact.id.clone(), self.artifacts.len());
        self.name_index
            .entry(normalize_name(&artifact.name))
            .or_insert_with(|| artifact.id.clone());
        self.artifacts.push(artifact);
    }

    /// Judges `raw` against the library: a match gains its provenance pair,
    /// anything else is appended.
    pub fn merge_raw(&mut self, raw: &RawArtifact, judge: &ExistsJudge) -> Result<MergeOutcome, IngestError> {
        match judge_exists(self, raw, judge)? {
            Some(id) => {
                let i = self.position[&id];
                self.artifacts[i].provenance.push(Provenance {
                    source: raw.source_name.clone(),
                    raw_id: raw.raw_id.clone(),
                });
                Ok(MergeOutcome::Matched(id))
            }
            None => Ok(MergeOutcome::Added(self.insert_new(raw))),
        }
    }

    /// Merges an already consolidated artifact. Provenance pairs are unioned,
    /// so re-merging a library into itself changes nothing.
    pub fn merge_artifact(&mut self, artifact: &Artifact, judge: &ExistsJudge) -> Result<MergeOutcome, IngestError> {
        let first = artifact
            .provenance
            .first()
            .ok_or_else(|| IngestError::Schema(format!("artifact {} has no provenance", artifact.id)))?;
        let raw = RawArtifact {
            source_name: first.source.clone(),
            raw_id: first.raw_id.clone(),
            name: artifact.name.clone(),
            description: artifact.description.clone(),
        };
        let outcome = match judge_exists(self, &raw, judge)? {
            Some(id) => MergeOutcome::Matched(id),
            None => MergeOutcome::Added(self.insert_new(&raw)),
        };
        let i = self.position[outcome.id()];
        let provenance = &mut self.artifacts[i].provenance;
        for p in &artifact.provenance {
            if !provenance.contains(p) {
                provenance.push(p.clone());
            }
        }
        Ok(outcome)
    }

    /// Builds a library from already consolidated artifacts, checking ids are
    /// unique and every artifact has a name and provenance.
    pub fn from_artifacts(artifacts: Vec<Artifact>) -> Result<Self, IngestError> {
        let mut lib = ArtifactLibrary::new();
        for a in artifacts {
            if a.id.trim().is_empty() {
                return Err(IngestError::Schema("artifact with empty id".into()));
            }
            if a.name.trim().is_empty() {
                return Err(IngestError::Schema(format!("artifact {} has an empty name", a.id)));
            }
            if a.provenance.is_empty() {
                return Err(IngestError::Schema(format!("artifact {} has no provenance", a.id)));
            }
            if lib.contains_id(&a.id) {
                return Err(IngestError::Schema(format!("duplicate artifact id {}", a.id)));
            }
            lib.push(a);
        }
        Ok(lib)
    }

    pub fn to_json_string(&self) -> String {
        let doc = LibraryDocument {
            artifacts: self.artifacts.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("library serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self, IngestError> {
        let doc: LibraryDocument =
            serde_json::from_str(text).map_err(|e| IngestError::Schema(e.to_string()))?;
        Self::from_artifacts(doc.artifacts)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        }
        std::fs::write(path, self.to_json_string()).map_err(|e| io_error(path, e))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// A source that could not be fetched or parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFailure {
    pub source: String,
    pub error: IngestError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceStats {
    pub source: String,
    pub parsed: usize,
    pub added: usize,
    pub matched: usize,
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub library: ArtifactLibrary,
    pub stats: Vec<SourceStats>,
    pub failures: Vec<SourceFailure>,
}

impl BuildReport {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn parsed_total(&self) -> usize {
        self.stats.iter().map(|s| s.parsed).sum()
    }
}

/// Fetches every source (concurrently) and merges their artifacts into a new
/// library, sources in list order and artifacts in document order.
///
/// A source that fails to fetch or parse is recorded in the report and the
/// remaining sources still contribute. Judge errors abort the build.
pub fn build_library(
    sources: &[RepoSource],
    judge: &ExistsJudge,
    options: &FetchOptions,
) -> Result<BuildReport, IngestError> {
    if sources.is_empty() {
        return Err(IngestError::NoSources);
    }
    let parsed: Vec<Result<Vec<RawArtifact>, IngestError>> = sources
        .par_iter()
        .map(|s| {
            let bytes = fetch_metadata(s, options)?;
            parse_group_metadata(&bytes, s.format, &s.name)
        })
        .collect();

    let mut library = ArtifactLibrary::new();
    let mut stats = Vec::new();
    let mut failures = Vec::new();
    for (source, result) in sources.iter().zip(parsed) {
        match result {
            Ok(raws) => {
                let mut st = SourceStats {
                    source: source.name.clone(),
                    parsed: raws.len(),
                    added: 0,
                    matched: 0,
                };
                for raw in &raws {
                    match library.merge_raw(raw, judge)? {
                        MergeOutcome::Added(_) => st.added += 1,
                        MergeOutcome::Matched(_) => st.matched += 1,
                    }
                }
                log::info!(
                    "{}: {} groups, {} new, {} duplicates",
                    source.name,
                    st.parsed,
                    st.added,
                    st.matched
                );
                stats.push(st);
            }
            Err(error) => {
                log::warn!("{}: skipped ({error})", source.name);
                failures.push(SourceFailure {
                    source: source.name.clone(),
                    error,
                });
            }
        }
    }
    Ok(BuildReport {
        library,
        stats,
        failures,
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SourcesDocument {
    List(Vec<RepoSource>),
    Wrapped { sources: Vec<RepoSource> },
}

/// Reads a JSON list of sources (bare array or `{"sources": [...]}`).
/// Relative local paths are resolved against the file's directory.
pub fn load_sources(path: &Path) -> Result<Vec<RepoSource>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let doc: SourcesDocument = serde_json::from_str(&text)
        .map_err(|e| IngestError::Schema(format!("{}: {e}", path.display())))?;
    let mut sources = match doc {
        SourcesDocument::List(s) | SourcesDocument::Wrapped { sources: s } => s,
    };
    let base = path.parent().unwrap_or(Path::new(""));
    for s in &mut sources {
        if s.metadata_url.trim().is_empty() {
            return Err(IngestError::InvalidUrl(format!("source {} has an empty metadata_url", s.name)));
        }
        if !s.metadata_url.contains("://") && Path::new(&s.metadata_url).is_relative() {
            s.metadata_url = base.join(&s.metadata_url).to_string_lossy().into_owned();
        }
    }
    Ok(sources)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(source: &str, id: &str, name: &str, desc: &str) -> RawArtifact {
        RawArtifact {
            source_name: source.into(),
            raw_id: id.into(),
            name: name.into(),
            description: desc.into(),
        }
    }

    #[test]
    fn ids_are_slugs_with_collision_suffix() {
        let mut lib = ArtifactLibrary::new();
        assert_eq!(lib.insert_new(&raw("a", "x", "Web  Server!", "d")), "web-server");
        assert_eq!(lib.insert_new(&raw("a", "y", "web server", "e")), "web-server-2");
        assert_eq!(lib.insert_new(&raw("a", "z", "???", "f")), "artifact");
        assert_eq!(lib.id_for_name("web server"), Some("web-server"));
    }

    #[test]
    fn same_name_across_sources_merges_provenance() {
        let mut lib = ArtifactLibrary::new();
        let judge = ExistsJudge::default();
        lib.merge_raw(&raw("fedora", "editors", "Editors", "edit text"), &judge).unwrap();
        let out = lib.merge_raw(&raw("centos", "editors", "Editors", "edit text"), &judge).unwrap();
        assert_eq!(out, MergeOutcome::Matched("editors".into()));
        assert_eq!(lib.len(), 1);
        assert_eq!(lib.artifacts()[0].provenance.len(), 2);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mut lib = ArtifactLibrary::new();
        lib.insert_new(&raw("s", "b", "Beta", "second"));
        lib.insert_new(&raw("s", "a", "Alpha", "first"));
        let text = lib.to_json_string();
        let back = ArtifactLibrary::from_json_str(&text).unwrap();
        assert_eq!(back, lib);
        assert_eq!(back.to_json_string(), text);
        let keys: Vec<usize> = ["\"id\"", "\"name\"", "\"description\"", "\"provenance\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));

        let dup = r#"{"artifacts":[
            {"id":"x","name":"X","description":"","provenance":[{"source":"s","raw_id":"x"}]},
            {"id":"x","name":"Y","description":"","provenance":[{"source":"s","raw_id":"y"}]}]}"#;
        assert!(matches!(ArtifactLibrary::from_json_str(dup), Err(IngestError::Schema(_))));
        let bare = r#"{"artifacts":[{"id":"x","name":"X","description":"","provenance":[]}]}"#;
        assert!(matches!(ArtifactLibrary::from_json_str(bare), Err(IngestError::Schema(_))));
    }

    #[test]
    fn remerging_a_library_is_a_no_op() {
        let judge = ExistsJudge::default();
        let mut lib = ArtifactLibrary::new();
        for r in [
            raw("a", "1", "Editors", "edit text files"),
            raw("a", "2", "Fonts", "glyph typefaces"),
            raw("b", "1", "editors", "other words"),
        ] {
            lib.merge_raw(&r, &judge).unwrap();
        }
        let before = lib.clone();
        for a in before.artifacts() {
            lib.merge_artifact(a, &judge).unwrap();
        }
        assert_eq!(lib, before);
    }

    #[test]
    fn empty_source_list_is_rejected() {
        assert_eq!(
            build_library(&[], &ExistsJudge::default(), &FetchOptions::default()).unwrap_err(),
            IngestError::NoSources
        );
    }

    #[test]
    fn format_names() {
        assert_eq!("comps_xml".parse::<SourceFormat>().unwrap(), SourceFormat::CompsXml);
        assert!(matches!("yaml".parse::<SourceFormat>(), Err(IngestError::UnsupportedFormat(_))));
    }
}
