//! Small text helpers shared by ingestion, embedding and tree export.

use sha2::{Digest, Sha256};

/// Lowercased alphanumeric tokens; everything else is a separator.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Canonical form used to compare artifact names across sources.
///
/// Lowercases, drops punctuation, trims and collapses runs of whitespace to a
/// single space.
pub fn normalize_name(name: &str) -> String {
    let stripped: String = name
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Hyphenated slug of the normalized name; `fallback` when nothing survives.
pub fn slugify(name: &str, fallback: &str) -> String {
    let norm = normalize_name(name);
    if norm.is_empty() {
        fallback.to_string()
    } else {
        norm.replace(' ', "-")
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Uppercases the first character of a word.
pub fn title_case(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Appends `-2`, `-3`, ... to `base` until `taken` reports it free.
pub fn dedup_id(base: &str, taken: impl Fn(&str) -> bool) -> String {
    if !taken(base) {
        return base.to_string();
    }
    (2..)
        .map(|n| format!("{base}-{n}"))
        .find(|candidate| !taken(candidate))
        .expect("unbounded counter")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_on_non_alphanumerics() {
        assert_eq!(tokenize("Web-Server, httpd!"), vec!["web", "server", "httpd"]);
        assert!(tokenize("  ,;  ").is_empty());
    }

    #[test]
    fn normalize_name_rules() {
        assert_eq!(normalize_name("  Text   Editors "), "text editors");
        assert_eq!(normalize_name("Editors"), normalize_name("editors"));
        assert_eq!(normalize_name("C/C++ Tools"), "cc tools");
        assert_eq!(normalize_name("Web\tServer\n"), "web server");
    }

    #[test]
    fn slug_and_collisions() {
        assert_eq!(slugify("Web Server", "x"), "web-server");
        assert_eq!(slugify("!!!", "artifact"), "artifact");
        let taken = ["a", "a-2"];
        assert_eq!(dedup_id("a", |c| taken.contains(&c)), "a-3");
        assert_eq!(dedup_id("b", |c| taken.contains(&c)), "b");
    }

    #[test]
    fn title_case_first_letter() {
        assert_eq!(title_case("alpha"), "Alpha");
        assert_eq!(title_case(""), "");
    }
}
