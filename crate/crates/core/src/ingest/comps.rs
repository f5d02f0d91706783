//! Parsers for group metadata documents.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::Deserialize;

use super::{IngestError, RawArtifact, SourceFormat};
use crate::text::slugify;

/// Parses one metadata document into raw artifacts, in document order.
///
/// For comps XML only `<group>` elements directly under `<comps>` are read,
/// and within each group the first `<id>`, `<name>` and `<description>` that
/// carry no `xml:lang` attribute.
pub fn parse_group_metadata(
    bytes: &[u8],
    format: SourceFormat,
    source_name: &str,
) -> Result<Vec<RawArtifact>, IngestError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| IngestError::MalformedMetadata(format!("not UTF-8: {e}")))?;
    match format {
        SourceFormat::CompsXml => parse_comps(text, source_name),
        SourceFormat::LibraryJson => parse_library_json(text, source_name),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Id,
    Name,
    Description,
}

#[derive(Default)]
struct GroupState {
    id: Option<String>,
    name: Option<String>,
    description: Option<String>,
}

fn has_lang(e: &BytesStart<'_>) -> Result<bool, IngestError> {
    for attr in e.attributes() {
        let attr = attr.map_err(|err| IngestError::MalformedMetadata(err.to_string()))?;
        if attr.key.as_ref() == b"xml:lang" || attr.key.local_name().as_ref() == b"lang" {
            return Ok(true);
        }
    }
    Ok(false)
}

fn parse_comps(text: &str, source_name: &str) -> Result<Vec<RawArtifact>, IngestError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let malformed = |e: &dyn std::fmt::Display, pos: u64| {
        IngestError::MalformedMetadata(format!("{e} at byte {pos}"))
    };

    let mut out = Vec::new();
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut group: Option<GroupState> = None;
    // field being captured and its accumulated text
    let mut capture: Option<(Field, String)> = None;

    loop {
        let pos = reader.buffer_position();
        let event = reader.read_event().map_err(|e| malformed(&e, pos))?;
        match event {
            Event::Start(e) => {
                let name = e.name().as_ref().to_vec();
                if stack.is_empty() && name != b"comps" {
                    return Err(IngestError::MalformedMetadata(format!(
                        "expected <comps> root, found <{}>",
                        String::from_utf8_lossy(&name)
                    )));
                }
                let parent = stack.last().map(Vec::as_slice);
                if name == b"group" && parent == Some(b"comps") {
                    group = Some(GroupState::default());
                } else if parent == Some(b"group") {
                    if let (Some(g), Some(f)) = (group.as_ref(), field_of(&name)) {
                        if !already_set(g, f) && !has_lang(&e)? {
                            capture = Some((f, String::new()));
                        }
                    }
                }
                stack.push(name);
            }
            Event::Empty(e) => {
                let name = e.name().as_ref().to_vec();
                if stack.last().map(Vec::as_slice) == Some(b"group") {
                    if let (Some(g), Some(f)) = (group.as_mut(), field_of(&name)) {
                        if !already_set(g, f) && !has_lang(&e)? {
                            set_field(g, f, String::new());
                        }
                    }
                }
            }
            Event::Text(t) => {
                if let Some((_, buf)) = capture.as_mut() {
                    let s = t.unescape().map_err(|e| malformed(&e, pos))?;
                    buf.push_str(&s);
                }
            }
            Event::CData(c) => {
                if let Some((_, buf)) = capture.as_mut() {
                    buf.push_str(&String::from_utf8_lossy(&c));
                }
            }
            Event::End(e) => {
                let name = e.name().as_ref().to_vec();
                stack.pop();
                if let Some((field, buf)) = capture.take() {
                    if let Some(g) = group.as_mut() {
                        set_field(g, field, buf.trim().to_string());
                    }
                }
                if name == b"group" && stack.last().map(Vec::as_slice) == Some(b"comps") {
                    let g = group.take().unwrap_or_default();
                    out.push(finish_group(g, source_name)?);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(IngestError::MalformedMetadata("unexpected end of document".into()));
    }
    Ok(out)
}

fn field_of(name: &[u8]) -> Option<Field> {
    match name {
        b"id" => Some(Field::Id),
        b"name" => Some(Field::Name),
        b"description" => Some(Field::Description),
        _ => None,
    }
}

fn already_set(g: &GroupState, f: Field) -> bool {
    match f {
        Field::Id => g.id.is_some(),
        Field::Name => g.name.is_some(),
        Field::Description => g.description.is_some(),
    }
}

fn set_field(g: &mut GroupState, f: Field, value: String) {
    let slot = match f {
        Field::Id => &mut g.id,
        Field::Name => &mut g.name,
        Field::Description => &mut g.description,
    };
    slot.get_or_insert(value);
}

fn finish_group(g: GroupState, source_name: &str) -> Result<RawArtifact, IngestError> {
    let name = g.name.filter(|n| !n.is_empty()).ok_or_else(|| {
        IngestError::MalformedMetadata(format!(
            "group {} has no untranslated <name>",
            g.id.as_deref().unwrap_or("<unknown>")
        ))
    })?;
    let description = match g.description {
        Some(d) => d,
        None => {
            log::warn!("{source_name}: group `{name}` has no <description>");
            String::new()
        }
    };
    if description.is_empty() {
        log::warn!("{source_name}: group `{name}` has an empty description");
    }
    let raw_id = g
        .id
        .filter(|id| !id.is_empty())
        .unwrap_or_else(|| slugify(&name, "group"));
    Ok(RawArtifact {
        source_name: source_name.to_string(),
        raw_id,
        name,
        description,
    })
}

#[derive(Deserialize)]
struct JsonLibrary {
    artifacts: Vec<JsonEntry>,
}

#[derive(Deserialize)]
struct JsonEntry {
    id: String,
    name: String,
    #[serde(default)]
    description: String,
}

fn parse_library_json(text: &str, source_name: &str) -> Result<Vec<RawArtifact>, IngestError> {
    let lib: JsonLibrary = serde_json::from_str(text)
        .map_err(|e| IngestError::MalformedMetadata(format!("library JSON: {e}")))?;
    lib.artifacts
        .into_iter()
        .map(|a| {
            if a.name.trim().is_empty() {
                return Err(IngestError::MalformedMetadata(format!("artifact {} has no name", a.id)));
            }
            Ok(RawArtifact {
                source_name: source_name.to_string(),
                raw_id: a.id,
                name: a.name,
                description: a.description,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_GROUPS: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<!DOCTYPE comps PUBLIC "-//Red Hat, Inc.//DTD Comps info//EN" "comps.dtd">
<comps>
  <group>
    <id>web-server</id>
    <name>Web Server</name>
    <name xml:lang="de">Webserver</name>
    <description xml:lang="de">Webserver-Werkzeuge.</description>
    <description>These tools allow you to run a Web server on the system.</description>
    <default>false</default>
    <packagelist>
      <packagereq type="mandatory">httpd</packagereq>
    </packagelist>
  </group>
  <group>
    <id>editors</id>
    <name>Editors</name>
    <description>Programs that let you create &amp; edit text files.</description>
  </group>
  <category>
    <id>servers</id>
    <name>Servers</name>
    <grouplist><groupid>web-server</groupid></grouplist>
  </category>
</comps>"#;

    fn parse(text: &str) -> Result<Vec<RawArtifact>, IngestError> {
        parse_group_metadata(text.as_bytes(), SourceFormat::CompsXml, "fixture")
    }

    #[test]
    fn two_groups_in_document_order() {
        let groups = parse(TWO_GROUPS).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].name, "Web Server");
        assert_eq!(groups[0].raw_id, "web-server");
        assert_eq!(
            groups[0].description,
            "These tools allow you to run a Web server on the system."
        );
        assert_eq!(groups[1].name, "Editors");
        assert_eq!(groups[1].description, "Programs that let you create & edit text files.");
        assert!(groups.iter().all(|g| g.source_name == "fixture"));
    }

    #[test]
    fn empty_documents() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("<comps></comps>").unwrap().is_empty());
        assert!(parse("<comps/>").unwrap().is_empty());
    }

    #[test]
    fn missing_description_is_empty() {
        let g = parse("<comps><group><id>x</id><name>X Tools</name></group></comps>").unwrap();
        assert_eq!(g[0].description, "");
        let g = parse("<comps><group><name>X</name><description/></group></comps>").unwrap();
        assert_eq!(g[0].description, "");
        assert_eq!(g[0].raw_id, "x");
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            parse("<comps><group><name>X</name></comps>"),
            Err(IngestError::MalformedMetadata(_))
        ));
        assert!(matches!(parse("<repo></repo>"), Err(IngestError::MalformedMetadata(_))));
        assert!(matches!(
            parse("<comps><group><id>x</id></group></comps>"),
            Err(IngestError::MalformedMetadata(_))
        ));
        assert!(matches!(
            parse_group_metadata(&[0xff, 0xfe], SourceFormat::CompsXml, "s"),
            Err(IngestError::MalformedMetadata(_))
        ));
    }

    #[test]
    fn library_json_entries() {
        let doc = r#"{"artifacts": [
            {"id": "editors", "name": "Editors", "description": "edit text",
             "provenance": [{"source": "a", "raw_id": "editors"}]}
        ]}"#;
        let raws = parse_group_metadata(doc.as_bytes(), SourceFormat::LibraryJson, "lib").unwrap();
        assert_eq!(raws.len(), 1);
        assert_eq!(raws[0].raw_id, "editors");
        assert_eq!(raws[0].source_name, "lib");
        assert!(parse_group_metadata(b"{}", SourceFormat::LibraryJson, "lib").is_err());
    }
}
