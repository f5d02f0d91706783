//! Decides whether a freshly parsed artifact already exists in the library.

use std::sync::Arc;

use super::{ArtifactLibrary, IngestError, RawArtifact};
use crate::embed::{cosine_slices, TfIdfModel};
use crate::provider::ChatProvider;
use crate::summarize::PromptTemplate;
use crate::text::normalize_name;

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.9;
/// Libraries larger than this are not inlined into the judgment prompt.
pub const DEFAULT_MAX_PROMPT_LIBRARY: usize = 400;

/// How duplicates are detected while the library grows.
#[derive(Clone)]
pub enum ExistsJudge {
    /// Normalized-name equality, or TF-IDF description cosine at or above
    /// the threshold.
    Deterministic { similarity_threshold: f64 },
    /// Asks a chat model with the whole library inlined. Malformed answers
    /// are retried, then the deterministic rule decides.
    RemoteLlm {
        provider: Arc<dyn ChatProvider>,
        max_retries: u32,
        max_library_size: usize,
        fallback_threshold: f64,
    },
}

impl std::fmt::Debug for ExistsJudge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExistsJudge::Deterministic {
                similarity_threshold,
            } => f
                .debug_struct("Deterministic")
                .field("similarity_threshold", similarity_threshold)
                .finish(),
            ExistsJudge::RemoteLlm {
                provider,
                max_retries,
                max_library_size,
                ..
            } => f
                .debug_struct("RemoteLlm")
                .field("model", &provider.model())
                .field("max_retries", max_retries)
                .field("max_library_size", max_library_size)
                .finish(),
        }
    }
}

impl Default for ExistsJudge {
    fn default() -> Self {
        ExistsJudge::Deterministic {
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
        }
    }
}

impl ExistsJudge {
    pub fn deterministic(similarity_threshold: f64) -> Result<Self, IngestError> {
        if !(0.0..=1.0).contains(&similarity_threshold) {
            return Err(IngestError::InvalidJudge(format!(
                "similarity threshold {similarity_threshold} outside [0, 1]"
            )));
        }
        Ok(ExistsJudge::Deterministic {
            similarity_threshold,
        })
    }

    pub fn remote(provider: Arc<dyn ChatProvider>, max_retries: u32) -> Self {
        ExistsJudge::RemoteLlm {
            provider,
            max_retries,
            max_library_size: DEFAULT_MAX_PROMPT_LIBRARY,
            fallback_threshold: DEFAULT_SIMILARITY_THRESHOLD,
        }
    }
}

/// Renders the existence-judgment prompt for `candidate` against `library`.
pub fn render_exists_prompt(library: &ArtifactLibrary, candidate: &RawArtifact) -> String {
    let listed: String = library
        .artifacts()
        .iter()
        .map(|a| format!("\n- {}: {}", a.name, a.description))
        .collect();
    let artifact = format!("{}: {}", candidate.name, candidate.description);
    PromptTemplate::exists_judgment()
        .render(&[("library", &listed), ("artifact", &artifact)])
        .expect("template placeholders are fixed")
}

/// `Some(true)` for "A"/"Exists", `Some(false)` for "B"/"Not Exist".
pub fn parse_exists_answer(raw: &str) -> Option<bool> {
    let answer = raw.trim().trim_start_matches(['*', '(', '"', '\'']).to_ascii_uppercase();
    if answer.contains("NOT EXIST") || answer.starts_with('B') {
        return Some(false);
    }
    if answer.starts_with('A') || answer.starts_with("EXISTS") {
        return Some(true);
    }
    None
}

/// Index and cosine of the library description most similar to the
/// candidate's; ties go to the earliest artifact.
pub fn best_description_match(library: &ArtifactLibrary, candidate: &RawArtifact) -> Option<(usize, f64)> {
    if library.is_empty() {
        return None;
    }
    let mut corpus: Vec<&str> = library.artifacts().iter().map(|a| a.description.as_str()).collect();
    corpus.push(&candidate.description);
    let model = TfIdfModel::fit(&corpus).ok()?;
    let query = model.transform(&candidate.description);
    let mut best: Option<(usize, f64)> = None;
    for (i, a) in library.artifacts().iter().enumerate() {
        let sim = cosine_slices(&query, &model.transform(&a.description));
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((i, sim));
        }
    }
    best
}

fn deterministic_match(library: &ArtifactLibrary, candidate: &RawArtifact, threshold: f64) -> Option<String> {
    if let Some(id) = library.id_for_name(&normalize_name(&candidate.name)) {
        return Some(id.to_string());
    }
    best_description_match(library, candidate)
        .filter(|&(_, sim)| sim >= threshold)
        .map(|(i, _)| library.artifacts()[i].id.clone())
}

/// Id of the library artifact `candidate` duplicates, if any.
pub fn judge_exists(
    library: &ArtifactLibrary,
    candidate: &RawArtifact,
    judge: &ExistsJudge,
) -> Result<Option<String>, IngestError> {
    match judge {
        ExistsJudge::Deterministic {
            similarity_threshold,
        } => Ok(deterministic_match(library, candidate, *similarity_threshold)),
        ExistsJudge::RemoteLlm {
            provider,
            max_retries,
            max_library_size,
            fallback_threshold,
        } => {
            if library.is_empty() {
                return Ok(None);
            }
            if library.len() > *max_library_size {
                log::warn!(
                    "library has {} artifacts (limit {max_library_size}); judging `{}` deterministically",
                    library.len(),
                    candidate.name
                );
                return Ok(deterministic_match(library, candidate, *fallback_threshold));
            }
            let prompt = render_exists_prompt(library, candidate);
            for attempt in 0..=*max_retries {
                let answer = provider.complete(&prompt)?;
                match parse_exists_answer(&answer) {
                    Some(false) => return Ok(None),
                    Some(true) => {
                        // the model says "exists" without naming the entry
                        let id = library
                            .id_for_name(&normalize_name(&candidate.name))
                            .map(str::to_string)
                            .or_else(|| {
                                best_description_match(library, candidate)
                                    .map(|(i, _)| library.artifacts()[i].id.clone())
                            });
                        return Ok(id);
                    }
                    None => log::debug!("unparseable judgment (attempt {attempt}): {answer:?}"),
                }
            }
            log::warn!("no usable judgment for `{}`; falling back to deterministic rule", candidate.name);
            Ok(deterministic_match(library, candidate, *fallback_threshold))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ProviderError;
    use std::sync::Mutex;

    fn raw(name: &str, desc: &str) -> RawArtifact {
        RawArtifact {
            source_name: "s".into(),
            raw_id: name.to_lowercase(),
            name: name.into(),
            description: desc.into(),
        }
    }

    fn library() -> ArtifactLibrary {
        let mut lib = ArtifactLibrary::new();
        lib.insert_new(&raw("Editors", "Programs that allow you to create and edit text files."));
        lib.insert_new(&raw("Web Server", "These tools allow you to run a Web server on the system."));
        lib
    }

    struct Scripted(Mutex<Vec<&'static str>>);
    impl ChatProvider for Scripted {
        fn model(&self) -> &str {
            "scripted"
        }
        fn complete(&self, _prompt: &str) -> Result<String, ProviderError> {
            let mut answers = self.0.lock().unwrap();
            Ok(if answers.len() > 1 { answers.remove(0) } else { answers[0] }.to_string())
        }
    }

    fn remote(answers: Vec<&'static str>, retries: u32) -> ExistsJudge {
        ExistsJudge::remote(Arc::new(Scripted(Mutex::new(answers))), retries)
    }

    #[test]
    fn normalized_name_equality_matches() {
        let id = judge_exists(&library(), &raw("editors", "something else"), &ExistsJudge::default()).unwrap();
        assert_eq!(id.as_deref(), Some("editors"));
    }

    #[test]
    fn orthogonal_candidate_does_not_match() {
        let id = judge_exists(&library(), &raw("Fonts", "glyph typefaces"), &ExistsJudge::default()).unwrap();
        assert_eq!(id, None);
    }

    #[test]
    fn identical_description_matches_under_other_name() {
        let cand = raw("Text Editors", "Programs that allow you to create and edit text files.");
        let (idx, sim) = best_description_match(&library(), &cand).unwrap();
        assert_eq!(idx, 0);
        assert!((sim - 1.0).abs() < 1e-12);
        let judge = ExistsJudge::deterministic(0.9).unwrap();
        assert_eq!(judge_exists(&library(), &cand, &judge).unwrap().as_deref(), Some("editors"));
    }

    #[test]
    fn threshold_out_of_range() {
        assert!(ExistsJudge::deterministic(1.5).is_err());
    }

    #[test]
    fn prompt_follows_template() {
        let p = render_exists_prompt(&library(), &raw("Fonts", "glyphs"));
        assert!(p.starts_with("Artifact Library T: \n- Editors: "));
        assert!(p.contains("\n\nArtifact N: Fonts: glyphs\n\n"));
        assert!(p.contains("Please judge if artifact N exists in Artifact Library T."));
        assert!(p.ends_with("A. Exists. B Not Exist"));
    }

    #[test]
    fn answer_parsing() {
        assert_eq!(parse_exists_answer("A"), Some(true));
        assert_eq!(parse_exists_answer("A. Exists."), Some(true));
        assert_eq!(parse_exists_answer(" B Not Exist"), Some(false));
        assert_eq!(parse_exists_answer("Not Exist"), Some(false));
        assert_eq!(parse_exists_answer("maybe?"), None);
    }

    #[test]
    fn remote_exists_resolves_by_description() {
        let cand = raw("Text Editing", "Programs to create and edit text files.");
        let id = judge_exists(&library(), &cand, &remote(vec!["A. Exists."], 0)).unwrap();
        assert_eq!(id.as_deref(), Some("editors"));
        let id = judge_exists(&library(), &cand, &remote(vec!["B"], 0)).unwrap();
        assert_eq!(id, None);
    }

    #[test]
    fn remote_garbage_falls_back_to_deterministic() {
        let cand = raw("editors", "x");
        let id = judge_exists(&library(), &cand, &remote(vec!["hmm", "???"], 1)).unwrap();
        assert_eq!(id.as_deref(), Some("editors"));
    }

    #[test]
    fn remote_skips_prompt_for_empty_or_oversized_library() {
        let judge = remote(vec!["A"], 0);
        assert_eq!(judge_exists(&ArtifactLibrary::new(), &raw("X", "y"), &judge).unwrap(), None);
        let ExistsJudge::RemoteLlm { provider, .. } = remote(vec!["A"], 0) else { unreachable!() };
        let small_limit = ExistsJudge::RemoteLlm {
            provider,
            max_retries: 0,
            max_library_size: 1,
            fallback_threshold: 0.9,
        };
        // deterministic rule says no match even though the model would say "A"
        assert_eq!(judge_exists(&library(), &raw("Fonts", "glyphs"), &small_limit).unwrap(), None);
    }
}
