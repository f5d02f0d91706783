use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;

use super::{FeatureNode, FeatureTree, NextLevelMode, SolutionConfig, TreeError};
use crate::cluster::{
    gmm_em, hierarchical, kmeans, select_k, ClusterAlgo, ClusterAssignment, CnMethod, FitParams, Selection,
};
use crate::embed::{Embedder, EmbeddingMatrix};
use crate::ingest::ArtifactLibrary;
use crate::summarize::{summarize_cluster, FeatureSummary, Summarizer};
use crate::text::{dedup_id, slugify};

/// What happened at one recursion step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelTrace {
    /// Level whose nodes were clustered.
    pub level: usize,
    pub nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_range: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
    pub clusters: Option<usize>,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub tree: FeatureTree,
    pub levels: Vec<LevelTrace>,
}

/// Builds a tree with the offline summarizer and an embedder made from the
/// configuration (remote embedders then rely on their cache).
pub fn build_tree(library: &ArtifactLibrary, config: &SolutionConfig) -> Result<FeatureTree, TreeError> {
    let embedder = Embedder::new(config.embedder.clone())?;
    Ok(build_tree_with(library, config, &embedder, &Summarizer::Mock)?.tree)
}

/// Mean of the rows of `prev` belonging to each group.
fn centroid_rows(prev: &EmbeddingMatrix, groups: &[Vec<usize>], ids: Vec<String>) -> Result<EmbeddingMatrix, TreeError> {
    let rows = groups
        .iter()
        .map(|g| {
            let mut mean = vec![0.0; prev.dim()];
            for &i in g {
                for (m, v) in mean.iter_mut().zip(prev.row(i)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= g.len() as f64);
            mean
        })
        .collect();
    Ok(EmbeddingMatrix::with_ids(rows, ids)?)
}

fn cluster_level(
    x: &EmbeddingMatrix,
    config: &SolutionConfig,
    range: Option<CnMethod>,
    params: &FitParams,
) -> Result<(ClusterAssignment, Option<Selection>), TreeError> {
    match config.algo {
        ClusterAlgo::Hierarchical => Ok((hierarchical(x, config.cut)?.1, None)),
        algo => {
            let range = range.expect("selector range for partitional algorithms");
            let selection = select_k(x, algo, &range, params)?;
            let assignment = match algo {
                ClusterAlgo::Kmeans => kmeans(x, selection.k, params.seed, params.max_iter, params.tol)?.1,
                _ => gmm_em(x, selection.k, params.seed, params.max_iter, params.tol)?.1,
            };
            Ok((assignment, Some(selection)))
        }
    }
}

/// Builds the tree bottom-up.
///
/// Level 0 holds one leaf per artifact. Each step embeds the current level,
/// clusters it and summarizes every cluster into a parent. The step is
/// rejected, and the build stops, when the level already has at most
/// `min_top_count` nodes, the depth limit is reached, the selector range is
/// empty, the clustering does not reduce the node count, or it would leave
/// fewer than `min_top_count` parents. The selector range is clamped to
/// `[max(k_min, min_top_count), min(k_max, n - 1)]` and each level uses
/// seed `seed + level`.
pub fn build_tree_with(
    library: &ArtifactLibrary,
    config: &SolutionConfig,
    embedder: &Embedder,
    summarizer: &Summarizer,
) -> Result<BuildOutcome, TreeError> {
    config.validate()?;
    if library.len() < 2 {
        return Err(TreeError::TooFewArtifacts(library.len()));
    }
    let fingerprint = config.fingerprint();
    let mut taken: HashSet<String> = HashSet::new();
    let mut nodes: Vec<FeatureNode> = Vec::with_capacity(library.len() * 2);
    for a in library.artifacts() {
        let id = dedup_id(&format!("L0-{}", a.id), |c| taken.contains(c));
        taken.insert(id.clone());
        nodes.push(FeatureNode {
            id,
            name: a.name.clone(),
            description: a.description.clone(),
            level: 0,
            children: Vec::new(),
            artifact_id: Some(a.id.clone()),
        });
    }

    let stop = config.stop;
    let mut current: Vec<usize> = (0..nodes.len()).collect();
    let mut prev_matrix: Option<EmbeddingMatrix> = None;
    let mut prev_groups: Vec<Vec<usize>> = Vec::new();
    let mut levels = Vec::new();
    let mut level = 0usize;

    loop {
        let n = current.len();
        let mut trace = LevelTrace {
            level,
            nodes: n,
            k_range: None,
            selection: None,
            clusters: None,
            accepted: false,
            stop_reason: None,
        };
        if n <= stop.min_top_count {
            trace.stop_reason = Some(format!("{n} nodes is at or below the top-level minimum {}", stop.min_top_count));
            levels.push(trace);
            break;
        }
        if level + 1 > stop.max_depth {
            trace.stop_reason = Some(format!("depth limit {} reached", stop.max_depth));
            levels.push(trace);
            break;
        }
        let range = if config.algo == ClusterAlgo::Hierarchical {
            None
        } else {
            let k_min = config.cn.k_min.max(stop.min_top_count);
            let k_max = config.cn.k_max.min(n - 1);
            trace.k_range = Some((k_min, k_max));
            if k_min > k_max {
                trace.stop_reason = Some(format!("empty cluster-count range [{k_min}, {k_max}]"));
                levels.push(trace);
                break;
            }
            Some(CnMethod::new(config.cn.kind, k_min, k_max))
        };

        let ids: Vec<String> = current.iter().map(|&i| nodes[i].id.clone()).collect();
        let x = match (config.next_level, &prev_matrix) {
            (NextLevelMode::CentroidMean, Some(prev)) => centroid_rows(prev, &prev_groups, ids)?,
            _ => {
                let texts: Vec<String> = current.iter().map(|&i| nodes[i].embedding_text().to_string()).collect();
                embedder.embed(&ids, &texts)?
            }
        };
        let params = FitParams {
            seed: config.seed.wrapping_add(level as u64),
            max_iter: config.max_iter,
            tol: config.tol,
        };
        let (assignment, selection) = cluster_level(&x, config, range, &params)?;
        let k = assignment.k();
        trace.selection = selection;
        trace.clusters = Some(k);
        if k >= n {
            trace.stop_reason = Some(format!("clustering gave {k} clusters for {n} nodes"));
            levels.push(trace);
            break;
        }
        if k < stop.min_top_count {
            trace.stop_reason = Some(format!("{k} clusters is below the top-level minimum {}", stop.min_top_count));
            levels.push(trace);
            break;
        }

        let groups = assignment.members();
        let summaries: Vec<FeatureSummary> = groups
            .par_iter()
            .map(|g| {
                let children: Vec<FeatureSummary> = g
                    .iter()
                    .map(|&r| FeatureSummary {
                        name: nodes[current[r]].name.clone(),
                        description: nodes[current[r]].description.clone(),
                    })
                    .collect();
                summarize_cluster(&children, summarizer)
            })
            .collect::<Result<_, _>>()?;

        let parent_level = level + 1;
        let mut next = Vec::with_capacity(k);
        for (g, s) in groups.iter().zip(summaries) {
            let base = format!("L{parent_level}-{}", slugify(&s.name, "feature"));
            let id = dedup_id(&base, |c| taken.contains(c));
            taken.insert(id.clone());
            next.push(nodes.len());
            nodes.push(FeatureNode {
                id,
                name: s.name,
                description: s.description,
                level: parent_level,
                children: g.iter().map(|&r| nodes[current[r]].id.clone()).collect(),
                artifact_id: None,
            });
        }
        trace.accepted = true;
        levels.push(trace);
        log::debug!("level {level}: {n} nodes -> {k} parents");
        prev_matrix = Some(x);
        prev_groups = groups;
        current = next;
        level = parent_level;
    }

    let top_ids = current.iter().map(|&i| nodes[i].id.clone()).collect();
    let tree = FeatureTree::from_parts(nodes, top_ids, library.len(), fingerprint)?;
    Ok(BuildOutcome { tree, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::CnKind;
    use crate::embed::EmbedderConfig;
    use crate::ingest::{Artifact, Provenance};
    use crate::tree::StopCriteria;

    pub(crate) fn library_of(descs: &[(&str, &str)]) -> ArtifactLibrary {
        ArtifactLibrary::from_artifacts(
            descs
                .iter()
                .enumerate()
                .map(|(i, (name, desc))| Artifact {
                    id: format!("a{i:02}"),
                    name: name.to_string(),
                    description: desc.to_string(),
                    provenance: vec![Provenance {
                        source: "test".into(),
                        raw_id: format!("{i}"),
                    }],
                })
                .collect(),
        )
        .unwrap()
    }

    /// 20 artifacts in 4 groups of 5 with disjoint vocabularies.
    fn four_groups() -> ArtifactLibrary {
        let groups = [
            ["apache", "httpd", "webserver", "vhost"],
            ["vim", "emacs", "texteditor", "nano"],
            ["postgres", "mariadb", "sqlite", "database"],
            ["alsa", "pulseaudio", "mp3", "codec"],
        ];
        let mut descs = Vec::new();
        for g in &groups {
            for j in 0..5 {
                descs.push(format!("{} {} {} {}", g[j % 4], g[(j + 1) % 4], g[(j + 2) % 4], g[0]));
            }
        }
        let pairs: Vec<(String, String)> = descs.iter().enumerate().map(|(i, d)| (format!("Art {i}"), d.clone())).collect();
        let refs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        library_of(&refs)
    }

    #[test]
    fn small_library_stays_flat() {
        let lib = library_of(&[("A", "a"), ("B", "b"), ("C", "c"), ("D", "d")]);
        let cfg = SolutionConfig::new(EmbedderConfig::tfidf(), ClusterAlgo::Kmeans, CnKind::Silhouette);
        let t = build_tree(&lib, &cfg).unwrap();
        assert_eq!(t.layer_count(), 1);
        assert_eq!(t.top_ids().len(), 4);
    }

    #[test]
    fn four_groups_give_two_layers() {
        let lib = four_groups();
        let cfg = SolutionConfig::new(EmbedderConfig::tfidf(), ClusterAlgo::Kmeans, CnKind::Silhouette);
        let t = build_tree(&lib, &cfg).unwrap();
        assert_eq!(t.layer_count(), 2);
        assert_eq!(t.top_ids().len(), 4);
        for top in t.top_ids() {
            let arts: Vec<usize> = t
                .leaves_under(top)
                .iter()
                .map(|l| l.artifact_id.as_ref().unwrap()[1..].parse().unwrap())
                .collect();
            assert_eq!(arts.len(), 5);
            assert!(arts.iter().all(|a| a / 5 == arts[0] / 5), "mixed group {arts:?}");
        }
    }

    #[test]
    fn build_is_deterministic_and_records_levels() {
        let lib = four_groups();
        let cfg = SolutionConfig::new(EmbedderConfig::tfidf(), ClusterAlgo::Gmm, CnKind::Bic);
        let a = build_tree_with(&lib, &cfg, &Embedder::tfidf(), &Summarizer::Mock).unwrap();
        let b = build_tree_with(&lib, &cfg, &Embedder::tfidf(), &Summarizer::Mock).unwrap();
        assert_eq!(a.tree, b.tree);
        assert_eq!(a.levels, b.levels);
        assert!(a.levels.last().unwrap().stop_reason.is_some());
    }

    #[test]
    fn incompatible_and_tiny_inputs_fail() {
        let lib = four_groups();
        let cfg = SolutionConfig::new(EmbedderConfig::tfidf(), ClusterAlgo::Kmeans, CnKind::Bic);
        assert!(matches!(build_tree(&lib, &cfg), Err(TreeError::IncompatibleSolution { .. })));
        let one = library_of(&[("A", "a")]);
        let cfg = SolutionConfig::new(EmbedderConfig::tfidf(), ClusterAlgo::Kmeans, CnKind::Elbow);
        assert_eq!(build_tree(&one, &cfg), Err(TreeError::TooFewArtifacts(1)));
    }

    #[test]
    fn identical_descriptions_do_not_reduce() {
        // every description identical: GMM collapses to one component, which is
        // below the top-level minimum, so only leaves remain
        let lib = library_of(&[("A", "same"), ("B", "same"), ("C", "same"), ("D", "same"), ("E", "same"), ("F", "same")]);
        let cfg = SolutionConfig::new(EmbedderConfig::tfidf(), ClusterAlgo::Gmm, CnKind::Silhouette);
        let out = build_tree_with(&lib, &cfg, &Embedder::tfidf(), &Summarizer::Mock).unwrap();
        assert_eq!(out.tree.layer_count(), 1);
    }

    #[test]
    fn depth_and_minimum_are_respected() {
        let descs: Vec<(String, String)> = (0..40)
            .map(|i| (format!("N{i}"), format!("w{} w{} w{}", i % 7, i % 11, i % 13)))
            .collect();
        let refs: Vec<(&str, &str)> = descs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let lib = library_of(&refs);
        for (algo, cn) in crate::cluster::compatible_pairs() {
            let mut cfg = SolutionConfig::new(EmbedderConfig::tfidf(), algo, cn);
            cfg.stop = StopCriteria {
                min_top_count: 3,
                max_depth: 2,
            };
            let t = build_tree(&lib, &cfg).unwrap();
            assert!(t.layer_count() <= 3);
            assert!(t.top_ids().len() >= 3);
        }
    }

    #[test]
    fn centroid_mode_builds_valid_trees() {
        let lib = four_groups();
        let mut cfg = SolutionConfig::new(EmbedderConfig::tfidf(), ClusterAlgo::Kmeans, CnKind::Elbow);
        cfg.next_level = NextLevelMode::CentroidMean;
        cfg.stop.min_top_count = 2;
        let t = build_tree(&lib, &cfg).unwrap();
        t.validate_against(&lib).unwrap();
    }
}
