use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use super::EvalError;
use crate::embed::{cosine_slices, TfIdfModel};
use crate::ingest::{Artifact, ArtifactLibrary};
use crate::provider::ChatProvider;
use crate::tree::{render_tree, ExportFormat, FeatureNode, FeatureTree};

/// How a remote model is shown the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RemoteGuideMode {
    /// One choose-one prompt per expanded node.
    #[default]
    Traversal,
    /// The whole tree outline in a single prompt.
    WholeTree,
}

/// What scores candidates against a requirement.
#[derive(Clone)]
pub enum Guide {
    /// TF-IDF cosine, with IDF learned from the leaf texts and the requirement.
    EmbeddingMock,
    Remote {
        provider: Arc<dyn ChatProvider>,
        mode: RemoteGuideMode,
        max_retries: u32,
    },
}

impl std::fmt::Debug for Guide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl Guide {
    pub fn label(&self) -> String {
        match self {
            Guide::EmbeddingMock => "embedding_mock".to_string(),
            Guide::Remote { provider, mode, .. } => {
                let mode = match mode {
                    RemoteGuideMode::Traversal => "traversal",
                    RemoteGuideMode::WholeTree => "whole_tree",
                };
                format!("remote:{}:{mode}", provider.model())
            }
        }
    }
}

fn artifact_text(a: &Artifact) -> &str {
    if a.description.trim().is_empty() {
        &a.name
    } else {
        &a.description
    }
}

/// Cosine scorer whose vocabulary comes from the leaf texts plus the
/// requirement. An internal node is scored through the centroid of the leaf
/// vectors beneath it.
struct Scorer {
    model: TfIdfModel,
    query: Vec<f64>,
    leaf_vectors: HashMap<String, Vec<f64>>,
    leaf_order: HashMap<String, usize>,
}

impl Scorer {
    fn new(leaf_texts: &[&str], requirement: &str) -> Result<Self, EvalError> {
        let mut corpus = leaf_texts.to_vec();
        corpus.push(requirement);
        let model = TfIdfModel::fit(&corpus)?;
        let query = model.transform(requirement);
        Ok(Scorer {
            model,
            query,
            leaf_vectors: HashMap::new(),
            leaf_order: HashMap::new(),
        })
    }

    fn for_tree(tree: &FeatureTree, requirement: &str) -> Result<Self, EvalError> {
        let leaves = tree.leaves();
        let texts: Vec<&str> = leaves.iter().map(|l| l.embedding_text()).collect();
        let mut scorer = Scorer::new(&texts, requirement)?;
        scorer.leaf_vectors = leaves
            .iter()
            .zip(&texts)
            .map(|(l, t)| (l.id.clone(), scorer.model.transform(t)))
            .collect();
        scorer.leaf_order = leaves.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();
        Ok(scorer)
    }

    fn score(&self, text: &str) -> f64 {
        cosine_slices(&self.query, &self.model.transform(text))
    }

    fn node(&self, tree: &FeatureTree, n: &FeatureNode) -> f64 {
        if let Some(v) = self.leaf_vectors.get(&n.id) {
            return cosine_slices(&self.query, v);
        }
        let mut centroid = vec![0.0; self.query.len()];
        for leaf in tree.leaves_under(&n.id) {
            if let Some(v) = self.leaf_vectors.get(&leaf.id) {
                centroid.iter_mut().zip(v).for_each(|(c, x)| *c += x);
            }
        }
        cosine_slices(&self.query, &centroid)
    }
}

/// Descending by score, ascending by position on ties.
fn by_score_desc(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

pub fn render_choice_prompt(requirement: &str, candidates: &[(&str, &str)]) -> String {
    let mut s = format!("Requirement: {requirement}\n\nCandidates:\n");
    for (i, (name, desc)) in candidates.iter().enumerate() {
        s.push_str(&format!("{}. {name}: {}\n", i + 1, desc.split_whitespace().collect::<Vec<_>>().join(" ")));
    }
    s.push_str("\nWhich candidate best matches the requirement? Answer with the candidate number only.");
    s
}

/// First integer in `1..=n` in the answer, as a zero-based index.
pub fn parse_choice(answer: &str, n: usize) -> Option<usize> {
    answer
        .split(|c: char| !c.is_ascii_digit())
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse::<usize>().ok())
        .find(|&v| v >= 1 && v <= n)
        .map(|v| v - 1)
}

pub fn render_whole_tree_prompt(requirement: &str, tree: &FeatureTree) -> String {
    format!(
        "Feature tree (leaf artifact ids in brackets):\n{}\nRequirement: {requirement}\n\nList the ids of the artifacts that satisfy the requirement, most relevant first, one per line.",
        render_tree(tree, ExportFormat::Markdown)
    )
}

/// Asks the model to pick one candidate; `None` when no usable answer came
/// back within the retry budget.
fn remote_choice(
    provider: &dyn ChatProvider,
    max_retries: u32,
    requirement: &str,
    candidates: &[(&str, &str)],
) -> Result<Option<usize>, EvalError> {
    if candidates.len() == 1 {
        return Ok(Some(0));
    }
    let prompt = render_choice_prompt(requirement, candidates);
    for _ in 0..=max_retries {
        let answer = provider.complete(&prompt)?;
        if let Some(i) = parse_choice(&answer, candidates.len()) {
            return Ok(Some(i));
        }
    }
    log::warn!("no usable choice from {}; using embedding scores", provider.model());
    Ok(None)
}

/// Child scores under `guide`: cosine for the mock, 1 for the chosen child
/// and 0 for the rest with a remote model.
fn child_scores(guide: &Guide, scorer: &Scorer, tree: &FeatureTree, requirement: &str, children: &[&FeatureNode]) -> Result<Vec<f64>, EvalError> {
    let cosine: Vec<f64> = children.iter().map(|c| scorer.node(tree, c)).collect();
    match guide {
        Guide::EmbeddingMock => Ok(cosine),
        Guide::Remote {
            provider, max_retries, ..
        } => {
            let cands: Vec<(&str, &str)> = children.iter().map(|c| (c.name.as_str(), c.description.as_str())).collect();
            Ok(match remote_choice(provider.as_ref(), *max_retries, requirement, &cands)? {
                Some(chosen) => (0..children.len()).map(|i| if i == chosen { 1.0 } else { 0.0 }).collect(),
                None => cosine,
            })
        }
    }
}

/// Ranks `leaves` by cosine; with a remote guide its single pick goes first.
fn rank_leaves(guide: &Guide, scorer: &Scorer, tree: &FeatureTree, requirement: &str, leaves: &[&FeatureNode]) -> Result<Vec<String>, EvalError> {
    // ties follow leaf order in the tree, whatever path reached them
    let mut scored: Vec<(f64, usize)> = leaves.iter().enumerate().map(|(i, l)| (scorer.node(tree, l), i)).collect();
    let rank = |i: usize| scorer.leaf_order.get(&leaves[i].id).copied().unwrap_or(usize::MAX);
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(rank(a.1).cmp(&rank(b.1))));
    if let Guide::Remote {
        provider, max_retries, ..
    } = guide
    {
        let cands: Vec<(&str, &str)> = leaves.iter().map(|l| (l.name.as_str(), l.description.as_str())).collect();
        if let Some(chosen) = remote_choice(provider.as_ref(), *max_retries, requirement, &cands)? {
            let pos = scored.iter().position(|&(_, i)| i == chosen).expect("chosen leaf is ranked");
            let pick = scored.remove(pos);
            scored.insert(0, pick);
        }
    }
    Ok(scored
        .into_iter()
        .map(|(_, i)| leaves[i].artifact_id.clone().unwrap_or_default())
        .collect())
}

/// Beam search from the top nodes.
///
/// Paths are ranked by cumulative score and the best `beam` are kept at each
/// feature level; every leaf under the surviving level-1 nodes is then ranked
/// by its own score. With a beam at least as wide as every level this equals
/// ranking all leaves directly.
pub fn recommend_with_tree(requirement: &str, tree: &FeatureTree, guide: &Guide, beam: usize) -> Result<Vec<String>, EvalError> {
    if beam == 0 {
        return Err(EvalError::InvalidBeam);
    }
    if tree.node_count() == 0 {
        return Err(EvalError::EmptyTree);
    }
    let leaf_nodes = tree.leaves();
    let scorer = Scorer::for_tree(tree, requirement)?;

    if let Guide::Remote {
        provider,
        mode: RemoteGuideMode::WholeTree,
        max_retries,
    } = guide
    {
        let prompt = render_whole_tree_prompt(requirement, tree);
        for _ in 0..=*max_retries {
            let answer = provider.complete(&prompt)?;
            let ids = ids_in_answer(&answer, &leaf_nodes);
            if !ids.is_empty() {
                return Ok(ids);
            }
        }
        log::warn!("no artifact ids in the answer; ranking by embedding scores");
        return rank_leaves(&Guide::EmbeddingMock, &scorer, tree, requirement, &leaf_nodes);
    }

    let tops: Vec<&FeatureNode> = tree.top_ids().iter().filter_map(|t| tree.node(t)).collect();
    if tops.iter().all(|n| n.is_leaf()) {
        return rank_leaves(guide, &scorer, tree, requirement, &tops);
    }
    let top_scores = child_scores(guide, &scorer, tree, requirement, &tops)?;
    let mut frontier: Vec<(f64, &FeatureNode)> = top_scores.into_iter().zip(tops).collect();
    loop {
        let mut order: Vec<(f64, usize)> = frontier.iter().enumerate().map(|(i, (s, _))| (*s, i)).collect();
        order.sort_by(by_score_desc);
        order.truncate(beam);
        frontier = order.into_iter().map(|(_, i)| frontier[i]).collect();
        if frontier[0].1.level <= 1 {
            break;
        }
        let mut next = Vec::new();
        for (cum, node) in &frontier {
            let children = tree.children_of(&node.id);
            let scores = child_scores(guide, &scorer, tree, requirement, &children)?;
            next.extend(children.into_iter().zip(scores).map(|(c, s)| (cum + s, c)));
        }
        frontier = next;
    }
    let reached: Vec<&FeatureNode> = frontier.iter().flat_map(|(_, n)| tree.children_of(&n.id)).collect();
    rank_leaves(guide, &scorer, tree, requirement, &reached)
}

fn ids_in_answer(answer: &str, leaves: &[&FeatureNode]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for token in answer.split(|c: char| c.is_whitespace() || matches!(c, ',' | '[' | ']' | '`' | '"' | '\'')) {
        let token = token.trim_matches(|c: char| matches!(c, '.' | ':' | '-' | '*') && token.len() > 1);
        if leaves.iter().any(|l| l.artifact_id.as_deref() == Some(token)) && !out.iter().any(|o| o == token) {
            out.push(token.to_string());
        }
    }
    out
}

/// Ranks every artifact of `library` against the requirement and returns
/// the first `top_n`.
pub fn recommend_flat(requirement: &str, library: &ArtifactLibrary, guide: &Guide, top_n: usize) -> Result<Vec<String>, EvalError> {
    if library.is_empty() {
        return Err(EvalError::EmptyLibrary);
    }
    let texts: Vec<&str> = library.artifacts().iter().map(artifact_text).collect();
    let scorer = Scorer::new(&texts, requirement)?;
    let mut scored: Vec<(f64, usize)> = texts.iter().enumerate().map(|(i, t)| (scorer.score(t), i)).collect();
    scored.sort_by(by_score_desc);
    if let Guide::Remote {
        provider, max_retries, ..
    } = guide
    {
        let cands: Vec<(&str, &str)> = library
            .artifacts()
            .iter()
            .map(|a| (a.name.as_str(), a.description.as_str()))
            .collect();
        if let Some(chosen) = remote_choice(provider.as_ref(), *max_retries, requirement, &cands)? {
            let pos = scored.iter().position(|&(_, i)| i == chosen).expect("chosen artifact is ranked");
            let pick = scored.remove(pos);
            scored.insert(0, pick);
        }
    }
    Ok(scored
        .into_iter()
        .take(top_n)
        .map(|(_, i)| library.artifacts()[i].id.clone())
        .collect())
}
