//! Text navigator over a built tree.

use std::io::{BufRead, Write};

use ftb_core::ingest::ArtifactLibrary;
use ftb_core::tree::{FeatureNode, FeatureTree};

const HELP: &str = "commands: <number> open child, u up, s <text> search, q quit";

/// Result of one command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub output: String,
    pub quit: bool,
}

impl Step {
    fn say(output: impl Into<String>) -> Self {
        Step {
            output: output.into(),
            quit: false,
        }
    }
}

/// Cursor into a tree. The empty path is the virtual root whose children are
/// the top-level features.
pub struct Navigator<'a> {
    tree: &'a FeatureTree,
    library: Option<&'a ArtifactLibrary>,
    path: Vec<String>,
}

fn first_line(text: &str) -> &str {
    text.lines().next().unwrap_or("").trim()
}

impl<'a> Navigator<'a> {
    pub fn new(tree: &'a FeatureTree, library: Option<&'a ArtifactLibrary>) -> Self {
        Navigator {
            tree,
            library,
            path: Vec::new(),
        }
    }

    pub fn current(&self) -> Option<&'a FeatureNode> {
        self.path.last().and_then(|id| self.tree.node(id))
    }

    fn children(&self) -> Vec<&'a FeatureNode> {
        match self.current() {
            None => self.tree.top_ids().iter().filter_map(|id| self.tree.node(id)).collect(),
            Some(n) => self.tree.children_of(&n.id),
        }
    }

    fn breadcrumb(&self) -> String {
        if self.path.is_empty() {
            return "(top)".to_string();
        }
        self.path
            .iter()
            .filter_map(|id| self.tree.node(id))
            .map(|n| n.name.as_str())
            .collect::<Vec<_>>()
            .join(" > ")
    }

    /// What the user sees at the current position.
    pub fn view(&self) -> String {
        let mut out = format!("[{}]\n", self.breadcrumb());
        match self.current() {
            Some(leaf) if leaf.is_leaf() => {
                let id = leaf.artifact_id.as_deref().unwrap_or_default();
                out.push_str(&format!("artifact: {id}\nname: {}\ndescription: {}\n", leaf.name, leaf.description));
                if let Some(a) = self.library.and_then(|l| l.get(id)) {
                    let prov: Vec<String> = a.provenance.iter().map(|p| format!("{}:{}", p.source, p.raw_id)).collect();
                    out.push_str(&format!("provenance: {}\n", prov.join(", ")));
                }
            }
            _ => {
                for (i, c) in self.children().iter().enumerate() {
                    out.push_str(&format!("  {}. {}: {}\n", i + 1, c.name, first_line(&c.description)));
                }
            }
        }
        out
    }

    /// Name path from a top node down to `id`.
    fn path_names(&self, id: &str) -> String {
        self.tree
            .path_to(id)
            .iter()
            .filter_map(|p| self.tree.node(p))
            .map(|n| n.name.as_str())
            .collect::<Vec<_>>()
            .join(" > ")
    }

    pub fn handle(&mut self, input: &str) -> Step {
        let input = input.trim();
        if input.is_empty() {
            return Step::say(self.view());
        }
        if input == "q" {
            return Step {
                output: String::new(),
                quit: true,
            };
        }
        if input == "u" {
            if self.path.pop().is_none() {
                return Step::say("already at the top level");
            }
            return Step::say(self.view());
        }
        if input == "h" || input == "?" {
            return Step::say(HELP);
        }
        if let Some(query) = input.strip_prefix("s ") {
            return Step::say(self.search(query.trim()));
        }
        if let Ok(n) = input.parse::<usize>() {
            let children = self.children();
            if n == 0 || n > children.len() {
                return Step::say(format!("no child {n}; choose 1..{}", children.len()));
            }
            self.path.push(children[n - 1].id.clone());
            return Step::say(self.view());
        }
        Step::say(format!("unknown command `{input}`; {HELP}"))
    }

    /// Nodes whose name or description contains `query`, case-insensitively.
    pub fn search(&self, query: &str) -> String {
        let q = query.to_lowercase();
        if q.is_empty() {
            return "usage: s <text>".to_string();
        }
        let hits: Vec<String> = self
            .tree
            .nodes()
            .filter(|n| n.name.to_lowercase().contains(&q) || n.description.to_lowercase().contains(&q))
            .map(|n| self.path_names(&n.id))
            .collect();
        if hits.is_empty() {
            return format!("no match for `{query}`");
        }
        hits.join("\n")
    }
}

/// Reads commands until `q` or end of input.
pub fn run_session(nav: &mut Navigator<'_>, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    writeln!(output, "{HELP}")?;
    write!(output, "{}> ", nav.view())?;
    output.flush()?;
    for line in input.lines() {
        let step = nav.handle(&line?);
        if step.quit {
            break;
        }
        write!(output, "{}\n> ", step.output.trim_end())?;
        output.flush()?;
    }
    writeln!(output)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ftb_core::ingest::{Artifact, Provenance};

    fn node(id: &str, level: usize, name: &str, children: &[&str]) -> FeatureNode {
        FeatureNode {
            id: id.into(),
            name: name.into(),
            description: format!("{name} description\nsecond line"),
            level,
            children: children.iter().map(|c| c.to_string()).collect(),
            artifact_id: (level == 0).then(|| id.to_string()),
        }
    }

    fn tree() -> FeatureTree {
        FeatureTree::from_parts(
            vec![
                node("vim", 0, "Vim", &[]),
                node("emacs", 0, "Emacs", &[]),
                node("httpd", 0, "Httpd", &[]),
                node("p-edit", 1, "Editors", &["vim", "emacs"]),
                node("p-web", 1, "Web", &["httpd"]),
            ],
            vec!["p-edit".into(), "p-web".into()],
            3,
            String::new(),
        )
        .unwrap()
    }

    #[test]
    fn walk_down_and_up() {
        let t = tree();
        let lib = ArtifactLibrary::from_artifacts(vec![Artifact {
            id: "vim".into(),
            name: "Vim".into(),
            description: "d".into(),
            provenance: vec![Provenance {
                source: "fedora".into(),
                raw_id: "vim".into(),
            }],
        }])
        .unwrap();
        let mut nav = Navigator::new(&t, Some(&lib));
        assert!(nav.view().contains("  1. Editors: Editors description\n  2. Web"));
        assert_eq!(nav.handle("u").output, "already at the top level");
        nav.handle("1");
        let leaf = nav.handle("1").output;
        assert!(leaf.contains("artifact: vim"));
        assert!(leaf.contains("second line"));
        assert!(leaf.contains("provenance: fedora:vim"));
        assert!(nav.handle("u").output.starts_with("[Editors]"));
        assert!(nav.handle("9").output.starts_with("no child 9"));
        assert!(nav.handle("q").quit);
    }

    #[test]
    fn search_lists_paths() {
        let t = tree();
        let nav = Navigator::new(&t, None);
        assert_eq!(nav.search("VIM"), "Editors > Vim");
        assert!(nav.search("zzz").starts_with("no match"));
    }

    #[test]
    fn scripted_session() {
        let t = tree();
        let mut nav = Navigator::new(&t, None);
        let mut out = Vec::new();
        run_session(&mut nav, "2\n1\nq\n1\n".as_bytes(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("artifact: httpd"));
        assert_eq!(nav.current().unwrap().id, "httpd");
    }
}
