//! Parent-feature summarization for clusters of child features.

mod prompt;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::TfIdfModel;
use crate::provider::{ChatProvider, JsonlStore, ProviderError};
use crate::text::{sha256_hex, title_case};

pub use prompt::{PromptKind, PromptTemplate, EXISTS_JUDGMENT_BODY, FEATURE_SUMMARIZATION_BODY};

/// Prefix of every mock-generated parent description.
pub const MOCK_DESCRIPTION_PREFIX: &str = "Common functionality covering: ";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummarizeError {
    #[error("cannot summarize an empty cluster")]
    EmptyCluster,
    #[error("malformed summary: {0}")]
    MalformedSummary(String),
    #[error("invalid feature summary: {0}")]
    InvalidSummary(String),
    #[error("prompt template: {0}")]
    Template(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub name: String,
    pub description: String,
}

impl FeatureSummary {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Result<Self, SummarizeError> {
        let s = FeatureSummary {
            name: name.into(),
            description: description.into(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SummarizeError> {
        if self.name.trim().is_empty() {
            return Err(SummarizeError::InvalidSummary("empty name".into()));
        }
        if self.name.contains(['\n', '\r']) {
            return Err(SummarizeError::InvalidSummary(format!("name `{}` spans lines", self.name)));
        }
        if self.description.trim().is_empty() {
            return Err(SummarizeError::InvalidSummary(format!("`{}` has an empty description", self.name)));
        }
        Ok(())
    }
}

/// Renders the summarization prompt, one child description per line.
pub fn render_summarize_prompt(children: &[FeatureSummary]) -> Result<String, SummarizeError> {
    if children.is_empty() {
        return Err(SummarizeError::EmptyCluster);
    }
    let mut listed = String::new();
    for c in children {
        listed.push('\n');
        listed.push_str(&c.description.split_whitespace().collect::<Vec<_>>().join(" "));
    }
    listed.push('\n');
    PromptTemplate::feature_summarization().render(&[("descriptions", &listed)])
}

fn strip_label<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    let head = text.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    text[label.len()..].trim_start().strip_prefix(':')
}

fn clean_name(name: &str) -> &str {
    name.trim().trim_matches(|c: char| matches!(c, '*' | '"' | '\'' | '`')).trim()
}

/// Parses a `name: description` answer.
///
/// An optional leading `feature name:` label is dropped, as is a
/// `feature description:` label on a following line. The split is at the
/// first colon; a trailing colon on the description is removed.
pub fn parse_summary_response(raw: &str) -> Result<FeatureSummary, SummarizeError> {
    let text = raw.trim();
    let start = text
        .lines()
        .position(|l| l.contains(':'))
        .ok_or_else(|| SummarizeError::MalformedSummary(format!("no `:` in {raw:?}")))?;
    let body = text.lines().skip(start).collect::<Vec<_>>().join("\n");
    let body = body.trim_start();

    let (name, description) = match strip_label(body, "feature name") {
        Some(rest) => {
            let rest = rest.trim_start();
            let labelled = rest
                .split_once('\n')
                .and_then(|(first, tail)| strip_label(tail.trim_start(), "feature description").map(|d| (first, d)));
            match labelled {
                Some((name, desc)) => (name, desc),
                None => rest.split_once(':').ok_or_else(|| {
                    SummarizeError::MalformedSummary(format!("no name/description split in {raw:?}"))
                })?,
            }
        }
        None => body.split_once(':').expect("line contains a colon"),
    };
    let name = clean_name(name);
    let mut description = description.trim();
    if let Some(d) = strip_label(description, "feature description") {
        description = d.trim();
    }
    let description = description.strip_suffix(':').unwrap_or(description).trim_end();
    if name.is_empty() || description.is_empty() {
        return Err(SummarizeError::MalformedSummary(format!("empty name or description in {raw:?}")));
    }
    if name.contains('\n') {
        return Err(SummarizeError::MalformedSummary(format!("name spans lines in {raw:?}")));
    }
    FeatureSummary::new(name, description)
}

/// Deterministic offline summary.
///
/// A singleton cluster returns its child. Otherwise the name is the two
/// terms with the highest summed TF-IDF weight over the children's
/// descriptions (ties broken alphabetically), title-cased, and the
/// description lists the child names in order.
pub fn mock_summarize(children: &[FeatureSummary]) -> Result<FeatureSummary, SummarizeError> {
    match children {
        [] => Err(SummarizeError::EmptyCluster),
        [only] if only.description.trim().is_empty() => Ok(FeatureSummary {
            name: only.name.clone(),
            description: only.name.clone(),
        }),
        [only] => Ok(only.clone()),
        _ => {
            let descriptions: Vec<&str> = children.iter().map(|c| c.description.as_str()).collect();
            let mut terms = top_terms(&descriptions, 2);
            if terms.is_empty() {
                let names: Vec<&str> = children.iter().map(|c| c.name.as_str()).collect();
                terms = top_terms(&names, 2);
            }
            let name = if terms.is_empty() {
                "Feature".to_string()
            } else {
                terms.iter().map(|t| title_case(t)).collect::<Vec<_>>().join(" ")
            };
            let names: Vec<&str> = children.iter().map(|c| c.name.as_str()).collect();
            FeatureSummary::new(name, format!("{MOCK_DESCRIPTION_PREFIX}{}", names.join("; ")))
        }
    }
}

/// The `n` highest summed TF-IDF terms. Per-term contributions are summed in
/// sorted order so the result does not depend on document order.
fn top_terms(texts: &[&str], n: usize) -> Vec<String> {
    let Ok(model) = TfIdfModel::fit(texts) else {
        return Vec::new();
    };
    let rows: Vec<Vec<f64>> = texts.iter().map(|t| model.transform(t)).collect();
    let mut scores: Vec<(&String, f64)> = model
        .vocabulary()
        .iter()
        .enumerate()
        .map(|(j, term)| {
            let mut contributions: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            contributions.sort_by(f64::total_cmp);
            (term, contributions.iter().sum())
        })
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    scores.into_iter().filter(|(_, s)| *s > 0.0).take(n).map(|(t, _)| t.clone()).collect()
}

/// One cached completion, keyed by the prompt hash and model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCacheRecord {
    pub sha256: String,
    pub model: String,
    pub response: String,
}

/// Where parent summaries come from.
#[derive(Clone)]
pub enum Summarizer {
    Mock,
    Provider {
        provider: Arc<dyn ChatProvider>,
        max_retries: u32,
        allow_mock_fallback: bool,
        cache: Option<Arc<JsonlStore<SummaryCacheRecord>>>,
    },
}

impl std::fmt::Debug for Summarizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Summarizer::Mock => f.write_str("Mock"),
            Summarizer::Provider {
                provider,
                max_retries,
                allow_mock_fallback,
                cache,
            } => f
                .debug_struct("Provider")
                .field("model", &provider.model())
                .field("max_retries", max_retries)
                .field("allow_mock_fallback", allow_mock_fallback)
                .field("cached", &cache.is_some())
                .finish(),
        }
    }
}

impl Summarizer {
    pub fn provider(provider: Arc<dyn ChatProvider>, max_retries: u32) -> Self {
        Summarizer::Provider {
            provider,
            max_retries,
            allow_mock_fallback: true,
            cache: None,
        }
    }

    pub fn with_cache(self, store: Arc<JsonlStore<SummaryCacheRecord>>) -> Self {
        match self {
            Summarizer::Provider {
                provider,
                max_retries,
                allow_mock_fallback,
                ..
            } => Summarizer::Provider {
                provider,
                max_retries,
                allow_mock_fallback,
                cache: Some(store),
            },
            Summarizer::Mock => Summarizer::Mock,
        }
    }

    pub fn is_mock(&self) -> bool {
        matches!(self, Summarizer::Mock)
    }
}

/// Summarizes one cluster.
///
/// Provider answers that do not parse are retried up to `max_retries` times;
/// after that, or on a provider error, the mock answers when fallback is
/// allowed. Only answers that parse are cached.
pub fn summarize_cluster(children: &[FeatureSummary], summarizer: &Summarizer) -> Result<FeatureSummary, SummarizeError> {
    let Summarizer::Provider {
        provider,
        max_retries,
        allow_mock_fallback,
        cache,
    } = summarizer
    else {
        return mock_summarize(children);
    };
    let prompt = render_summarize_prompt(children)?;
    let digest = sha256_hex(&prompt);
    let model = provider.model().to_string();
    if let Some(hit) = cache
        .as_ref()
        .and_then(|c| c.find(|r| r.sha256 == digest && r.model == model))
    {
        if let Ok(summary) = parse_summary_response(&hit.response) {
            return Ok(summary);
        }
    }
    let mut last_error = SummarizeError::MalformedSummary("no attempt made".into());
    for attempt in 0..=*max_retries {
        match provider.complete(&prompt) {
            Ok(response) => match parse_summary_response(&response) {
                Ok(summary) => {
                    if let Some(c) = cache {
                        c.append(SummaryCacheRecord {
                            sha256: digest.clone(),
                            model: model.clone(),
                            response,
                        })?;
                    }
                    return Ok(summary);
                }
                Err(e) => {
                    log::debug!("summary attempt {attempt} unusable: {e}");
                    last_error = e;
                }
            },
            Err(e) => {
                last_error = SummarizeError::Provider(e);
                break;
            }
        }
    }
    if *allow_mock_fallback {
        log::warn!("falling back to the offline summary ({last_error})");
        mock_summarize(children)
    } else {
        Err(last_error)
    }
}
