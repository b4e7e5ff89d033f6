//! The intermediate query format: SPARQL with placeholder words in URI
//! positions, followed by a mapping block
//!
//! ```text
//! select distinct ?sbj where { ?sbj relation1 entity1 }
//!
//! entity1 = [ENT] Albert Einstein [/ENT] German-born theoretical physicist, ...
//! relation1 = [REL] head of state [/REL] official with the highest formal authority ...
//! ```
//!
//! Placeholders are bare words for `wd:` entities and `wdt:` properties.
//! Other property namespaces keep their prefix (`p:relation1`,
//! `ps:relation1`) so statement and qualifier patterns survive the round
//! trip.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::kg::{Memory, Namespace, UriKind, UriRef};
use crate::sparql::{tokenize, SparqlToken, TokenKind};

pub const ENT_OPEN: &str = "[ENT]";
pub const ENT_CLOSE: &str = "[/ENT]";
pub const REL_OPEN: &str = "[REL]";
pub const REL_CLOSE: &str = "[/REL]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderBinding {
    /// `entityN` or `relationN`.
    pub name: String,
    pub kind: UriKind,
    pub label: String,
    pub description: String,
}

impl PlaceholderBinding {
    pub fn new(kind: UriKind, index: usize, label: impl Into<String>, description: impl Into<String>) -> Self {
        PlaceholderBinding {
            name: format!("{}{}", kind.stem(), index),
            kind,
            label: label.into(),
            description: description.into(),
        }
    }

    /// Numeric suffix of the placeholder name.
    pub fn index(&self) -> usize {
        self.name[self.kind.stem().len()..].parse().unwrap_or(0)
    }

    /// `entity1 = [ENT] label [/ENT] description`
    pub fn render_line(&self) -> String {
        let (open, close) = tags(self.kind);
        let line = format!(
            "{} = {open} {} {close} {}",
            self.name, self.label, self.description
        );
        line.trim_end().to_string()
    }
}

fn tags(kind: UriKind) -> (&'static str, &'static str) {
    match kind {
        UriKind::Entity => (ENT_OPEN, ENT_CLOSE),
        UriKind::Relation => (REL_OPEN, REL_CLOSE),
    }
}

/// A query block with placeholders plus its bindings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntermediateQuery {
    pub template: String,
    /// Entities by index, then relations by index.
    pub bindings: Vec<PlaceholderBinding>,
    /// Original text when parsed from model output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

impl PartialEq for IntermediateQuery {
    fn eq(&self, other: &Self) -> bool {
        self.template == other.template && self.bindings == other.bindings
    }
}

impl Eq for IntermediateQuery {}

impl IntermediateQuery {
    pub fn binding(&self, name: &str) -> Option<&PlaceholderBinding> {
        self.bindings.iter().find(|b| b.name == name)
    }

    /// Distinct placeholder names in the template, in order of appearance.
    pub fn placeholders(&self) -> Vec<String> {
        template_placeholders(&self.template)
            .into_iter()
            .map(|p| p.name)
            .fold(Vec::new(), |mut acc, name| {
                if !acc.contains(&name) {
                    acc.push(name);
                }
                acc
            })
    }

    pub fn render(&self) -> String {
        render_pgmr(self)
    }
}

/// Placeholder occurrence in a template token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaceholderToken {
    pub name: String,
    pub kind: UriKind,
    /// Explicit namespace prefix, absent for bare placeholders.
    pub namespace: Option<Namespace>,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:(wd|wdt|p|ps|pq):)?((entity|relation)[1-9][0-9]*)$").unwrap()
    })
}

/// Recognizes a placeholder token such as `entity3` or `pq:relation2`.
pub fn parse_placeholder(text: &str) -> Option<PlaceholderToken> {
    let caps = placeholder_re().captures(text)?;
    let kind = if &caps[3] == "entity" {
        UriKind::Entity
    } else {
        UriKind::Relation
    };
    let namespace = caps.get(1).and_then(|m| Namespace::from_prefix(m.as_str()));
    if namespace.is_some_and(|ns| ns.kind() != kind) {
        return None;
    }
    Some(PlaceholderToken {
        name: caps[2].to_string(),
        kind,
        namespace,
    })
}

fn template_placeholders(template: &str) -> Vec<PlaceholderToken> {
    tokenize(template)
        .iter()
        .filter(|t| t.kind == TokenKind::Other)
        .filter_map(|t| parse_placeholder(&t.text))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("no metadata for {0}")]
    MissingMetadata(UriRef),
}

/// Result of converting a SPARQL query, with the placeholder → URI mapping
/// kept for inspection and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transformed {
    pub query: IntermediateQuery,
    pub inverse: BTreeMap<String, UriRef>,
}

/// Replaces every URI in `query` with a placeholder and builds the mapping
/// block from memory metadata.
pub fn sparql_to_pgmr(
    query: &str,
    entity_mem: &Memory,
    relation_mem: &Memory,
) -> Result<Transformed, TransformError> {
    let tokens = tokenize(query);
    let mut names: HashMap<UriRef, String> = HashMap::new();
    let mut order: [Vec<UriRef>; 2] = [Vec::new(), Vec::new()];
    for token in &tokens {
        if let Some(q) = token.uri() {
            let slot = match q.uri.kind() {
                UriKind::Entity => 0,
                UriKind::Relation => 1,
            };
            if !names.contains_key(&q.uri) {
                order[slot].push(q.uri);
                names.insert(
                    q.uri,
                    format!("{}{}", q.uri.kind().stem(), order[slot].len()),
                );
            }
        }
    }

    let mut bindings = Vec::new();
    let mut inverse = BTreeMap::new();
    for (uris, memory) in order.iter().zip([entity_mem, relation_mem]) {
        for (i, uri) in uris.iter().enumerate() {
            let record = memory
                .get(*uri)
                .ok_or(TransformError::MissingMetadata(*uri))?;
            let binding =
                PlaceholderBinding::new(uri.kind(), i + 1, record.label(), record.description());
            inverse.insert(binding.name.clone(), *uri);
            bindings.push(binding);
        }
    }

    let template = rebuild(&tokens, |token| {
        token.uri().map(|q| {
            let name = &names[&q.uri];
            if q.namespace == Namespace::default_for(q.uri.kind()) {
                name.clone()
            } else {
                format!("{}:{}", q.namespace.prefix(), name)
            }
        })
    });

    Ok(Transformed {
        query: IntermediateQuery {
            template,
            bindings,
            raw: None,
        },
        inverse,
    })
}

/// Joins tokens with whitespace runs collapsed to one space, dropping
/// comments and applying `replace` to each token.
pub(crate) fn rebuild(
    tokens: &[SparqlToken],
    mut replace: impl FnMut(&SparqlToken) -> Option<String>,
) -> String {
    let mut out = String::new();
    let mut pending_space = false;
    for token in tokens {
        if token.is_trivia() {
            pending_space = true;
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        match replace(token) {
            Some(text) => out.push_str(&text),
            None => out.push_str(&token.text),
        }
    }
    out
}

/// Template, a blank line, then one binding per line.
pub fn render_pgmr(iq: &IntermediateQuery) -> String {
    if iq.bindings.is_empty() {
        return iq.template.clone();
    }
    let lines: Vec<String> = iq.bindings.iter().map(PlaceholderBinding::render_line).collect();
    format!("{}\n\n{}", iq.template, lines.join("\n"))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PgmrError {
    #[error("no recognizable query block")]
    NoQueryBlock,
    #[error("unpaired special token at byte offset {offset}")]
    UnpairedSpecialToken { offset: usize },
}

/// Parsed model output. `missing` lists template placeholders that have no
/// usable binding; a non-empty list means the query cannot be grounded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPgmr {
    pub query: IntermediateQuery,
    pub missing: Vec<String>,
}

impl ParsedPgmr {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }
}

fn binding_start_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?m)(?:^|[\s}])((?:entity|relation)[1-9][0-9]*)\s*=\s*\[(?:ENT|REL)\]").unwrap()
    })
}

fn tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[(/?)(ENT|REL)\]").unwrap())
}

/// Splits model output into query block and mapping block and recovers the
/// bindings.
///
/// Tolerated: a missing blank line, several bindings on one line, duplicate
/// binding lines (the first wins), bindings whose placeholder never occurs
/// (dropped). Placeholders without a binding are reported in `missing`.
pub fn parse_pgmr(text: &str) -> Result<ParsedPgmr, PgmrError> {
    let starts: Vec<(usize, &str)> = binding_start_re()
        .captures_iter(text)
        .map(|c| {
            let m = c.get(1).unwrap();
            (m.start(), m.as_str())
        })
        .collect();
    let block_end = starts.first().map_or(text.len(), |(s, _)| *s);
    let query_block = text[..block_end].trim();

    if let Some(m) = tag_re().find(&text[..block_end]) {
        return Err(PgmrError::UnpairedSpecialToken { offset: m.start() });
    }
    if !looks_like_query(query_block) {
        return Err(PgmrError::NoQueryBlock);
    }
    check_tag_pairing(text, block_end)?;

    let mut found: BTreeMap<(u8, usize), PlaceholderBinding> = BTreeMap::new();
    let mut rejected: Vec<String> = Vec::new();
    for (i, (start, name)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(text.len(), |(s, _)| *s);
        let segment = &text[*start..end];
        match parse_binding(name, segment) {
            Some(binding) => {
                let key = (
                    match binding.kind {
                        UriKind::Entity => 0,
                        UriKind::Relation => 1,
                    },
                    binding.index(),
                );
                found.entry(key).or_insert(binding);
            }
            None => rejected.push(name.to_string()),
        }
    }

    let template = query_block.to_string();
    let used = template_placeholders(&template);
    let mut missing = Vec::new();
    for p in &used {
        let has = found.values().any(|b| b.name == p.name);
        if !has && !missing.contains(&p.name) {
            missing.push(p.name.clone());
        }
    }
    let bindings = found
        .into_values()
        .filter(|b| used.iter().any(|p| p.name == b.name))
        .collect();

    Ok(ParsedPgmr {
        query: IntermediateQuery {
            template,
            bindings,
            raw: Some(text.to_string()),
        },
        missing,
    })
}

fn looks_like_query(block: &str) -> bool {
    let tokens = tokenize(block);
    let has_form = tokens.iter().any(|t| {
        ["SELECT", "ASK", "CONSTRUCT", "DESCRIBE"]
            .iter()
            .any(|k| t.is_keyword(k))
    });
    has_form && tokens.iter().any(|t| t.is_punct("{"))
}

fn check_tag_pairing(text: &str, from: usize) -> Result<(), PgmrError> {
    let mut open: Option<(&str, usize)> = None;
    for caps in tag_re().captures_iter(&text[from..]) {
        let m = caps.get(0).unwrap();
        let offset = from + m.start();
        let closing = !caps[1].is_empty();
        let kind = caps.get(2).unwrap().as_str();
        match (open, closing) {
            (None, false) => open = Some((kind, offset)),
            (Some((k, _)), true) if k == kind => open = None,
            (Some((_, at)), false) => return Err(PgmrError::UnpairedSpecialToken { offset: at }),
            _ => return Err(PgmrError::UnpairedSpecialToken { offset }),
        }
    }
    match open {
        Some((_, at)) => Err(PgmrError::UnpairedSpecialToken { offset: at }),
        None => Ok(()),
    }
}

/// `segment` starts at the placeholder name and runs to the next binding.
fn parse_binding(name: &str, segment: &str) -> Option<PlaceholderBinding> {
    let kind = if name.starts_with("entity") {
        UriKind::Entity
    } else {
        UriKind::Relation
    };
    let (open, close) = tags(kind);
    let after_open = segment.find(open)? + open.len();
    let close_at = after_open + segment[after_open..].find(close)?;
    let label = segment[after_open..close_at].trim();
    let rest = &segment[close_at + close.len()..];
    let description = rest.split('\n').next().unwrap_or("").trim();
    Some(PlaceholderBinding {
        name: name.to_string(),
        kind,
        label: label.to_string(),
        description: description.to_string(),
    })
}

/// One line of a transformed dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformedRecord {
    pub question: String,
    pub pgmr_text: String,
    pub gold_sparql: String,
}
