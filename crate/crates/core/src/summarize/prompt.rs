use serde::{Deserialize, Serialize};

use super::SummarizeError;

/// Existence judgment used while consolidating the artifact library.
pub const EXISTS_JUDGMENT_BODY: &str = "Artifact Library T: ${library}\n\nArtifact N: ${artifact}\n\nPlease judge if artifact N exists in Artifact Library T. \n\nA. Exists. B Not Exist";

/// Parent-feature summarization over the members of one cluster.
pub const FEATURE_SUMMARIZATION_BODY: &str = "Based on the following sub-features, please generate a parent common feature that can cover these sub-features. \nThe sub-features are: {${descriptions}}\nPlease only output the common feature in the format of 'feature name: feature description:'.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    ExistsJudgment,
    FeatureSummarization,
}

/// Prompt text with `${name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub body: String,
}

impl PromptTemplate {
    pub fn exists_judgment() -> Self {
        PromptTemplate {
            kind: PromptKind::ExistsJudgment,
            body: EXISTS_JUDGMENT_BODY.to_string(),
        }
    }

    pub fn feature_summarization() -> Self {
        PromptTemplate {
            kind: PromptKind::FeatureSummarization,
            body: FEATURE_SUMMARIZATION_BODY.to_string(),
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find("${") {
            let after = &rest[start + 2..];
            match after.find('}') {
                Some(end) => {
                    let name = &after[..end];
                    if !out.contains(&name) {
                        out.push(name);
                    }
                    rest = &after[end + 1..];
                }
                None => break,
            }
        }
        out
    }

    /// Substitutes every placeholder; values are inserted verbatim.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, SummarizeError> {
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find("${") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after
                .find('}')
                .ok_or_else(|| SummarizeError::Template("unterminated placeholder".into()))?;
            let name = &after[..end];
            let value = values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| SummarizeError::Template(format!("no value for placeholder `{name}`")))?;
            out.push_str(value);
            rest = &after[end + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}
