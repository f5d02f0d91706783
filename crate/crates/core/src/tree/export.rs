use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureNode, FeatureTree, TreeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Json,
    Dot,
    Markdown,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Json => "json",
            ExportFormat::Dot => "dot",
            ExportFormat::Markdown => "md",
        }
    }
}

impl std::str::FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "dot" => Ok(ExportFormat::Dot),
            "markdown" | "md" => Ok(ExportFormat::Markdown),
            other => Err(format!("unknown export format `{other}`")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TreeDocument {
    library_size: usize,
    nodes: Vec<FeatureNode>,
    top_ids: Vec<String>,
    config_fingerprint: String,
}

fn to_json(tree: &FeatureTree) -> String {
    let doc = TreeDocument {
        library_size: tree.library_size,
        nodes: tree.nodes.values().cloned().collect(),
        top_ids: tree.top_ids.clone(),
        config_fingerprint: tree.config_fingerprint.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("tree serializes");
    s.push('\n');
    s
}

fn dot_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

fn to_dot(tree: &FeatureTree) -> String {
    let mut s = String::from("digraph ftree {\n");
    for n in tree.nodes.values() {
        let _ = writeln!(s, "  {} [label={}];", dot_quote(&n.id), dot_quote(&n.name));
    }
    for n in tree.nodes.values() {
        for c in &n.children {
            let _ = writeln!(s, "  {} -> {};", dot_quote(&n.id), dot_quote(c));
        }
    }
    s.push_str("}\n");
    s
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn to_markdown(tree: &FeatureTree) -> String {
    let mut s = String::new();
    let mut stack: Vec<(&str, usize)> = tree.top_ids.iter().rev().map(|t| (t.as_str(), 0)).collect();
    while let Some((id, depth)) = stack.pop() {
        let n = &tree.nodes[id];
        let indent = "  ".repeat(depth);
        let label = match &n.artifact_id {
            Some(a) => format!("{} [{a}]", n.name),
            None => n.name.clone(),
        };
        let desc = one_line(&n.description);
        if desc.is_empty() {
            let _ = writeln!(s, "{indent}- {label}");
        } else {
            let _ = writeln!(s, "{indent}- {label}: {desc}");
        }
        stack.extend(n.children.iter().rev().map(|c| (c.as_str(), depth + 1)));
    }
    s
}

/// The tree in the requested text format.
pub fn render_tree(tree: &FeatureTree, format: ExportFormat) -> String {
    match format {
        ExportFormat::Json => to_json(tree),
        ExportFormat::Dot => to_dot(tree),
        ExportFormat::Markdown => to_markdown(tree),
    }
}

pub fn export_tree(tree: &FeatureTree, format: ExportFormat, sink: &Path) -> Result<(), TreeError> {
    let io = |p: &Path, e: std::io::Error| TreeError::Io {
        path: p.to_path_buf(),
        message: e.to_string(),
    };
    if let Some(dir) = sink.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    std::fs::write(sink, render_tree(tree, format)).map_err(|e| io(sink, e))
}

/// Parses and validates a JSON tree document.
pub fn parse_tree_json(text: &str) -> Result<FeatureTree, TreeError> {
    let doc: TreeDocument =
        serde_json::from_str(text).map_err(|e| TreeError::Schema(format!("json: {e}")))?;
    FeatureTree::from_parts(doc.nodes, doc.top_ids, doc.library_size, doc.config_fingerprint)
}

pub fn import_tree(path: &Path) -> Result<FeatureTree, TreeError> {
    let text = std::fs::read_to_string(path).map_err(|e| TreeError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_tree_json(&text)
}
