//! Structural parse: head, top-level WHERE elements, tail.

use serde::{Deserialize, Serialize};

use super::lexer::{tokenize, SparqlToken, TokenKind};
use super::SparqlError;
use crate::kg::QualifiedUri;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TripleTerm {
    /// Variable name including its sigil, as written.
    Variable(String),
    Uri(QualifiedUri),
    Literal(String),
    /// Anything not modelled: property paths, non-Wikidata names, `a`,
    /// blank nodes, placeholders.
    Opaque(String),
}

impl TripleTerm {
    pub fn is_opaque(&self) -> bool {
        matches!(self, TripleTerm::Opaque(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriplePattern {
    pub subject: TripleTerm,
    pub predicate: TripleTerm,
    pub object: TripleTerm,
    pub(crate) terms: [Vec<SparqlToken>; 3],
}

impl TriplePattern {
    pub fn terms(&self) -> [&TripleTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    pub(crate) fn term_tokens(&self) -> &[Vec<SparqlToken>; 3] {
        &self.terms
    }
}

/// One top-level member of the WHERE block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WhereElement {
    Triple(TriplePattern),
    /// FILTER / OPTIONAL / UNION / nested groups and anything else kept
    /// verbatim. Holds the exact source text of the construct.
    Opaque { text: String, tokens: Vec<SparqlToken> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseQuality {
    Full,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedQuery {
    /// Everything before the WHERE block, whitespace-normalized.
    pub head_text: String,
    pub elements: Vec<WhereElement>,
    /// Modifiers after the WHERE block, whitespace-normalized.
    pub tail_text: String,
    pub raw: String,
    pub parse_quality: ParseQuality,
    pub(crate) head_tokens: Vec<SparqlToken>,
    pub(crate) tail_tokens: Vec<SparqlToken>,
}

impl ParsedQuery {
    pub fn triples(&self) -> impl Iterator<Item = &TriplePattern> {
        self.elements.iter().filter_map(|e| match e {
            WhereElement::Triple(t) => Some(t),
            WhereElement::Opaque { .. } => None,
        })
    }
}

fn join_text(tokens: &[SparqlToken]) -> String {
    tokens
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Keywords that start a group-like WHERE element.
const GROUP_KEYWORDS: &[&str] = &[
    "FILTER", "OPTIONAL", "MINUS", "BIND", "VALUES", "SERVICE", "GRAPH",
];

fn opens(t: &SparqlToken) -> bool {
    t.kind == TokenKind::Punct && matches!(t.text.as_str(), "{" | "(" | "[")
}

fn closes(t: &SparqlToken) -> bool {
    t.kind == TokenKind::Punct && matches!(t.text.as_str(), "}" | ")" | "]")
}

fn starts_group_element(t: &SparqlToken) -> bool {
    t.is_punct("{")
        || (t.kind == TokenKind::Keyword && GROUP_KEYWORDS.iter().any(|k| t.is_keyword(k)))
}

/// Parses `query` into head, WHERE elements and tail.
///
/// Only unbalanced braces are an error; everything not understood is kept
/// as opaque text.
pub fn parse(query: &str) -> Result<ParsedQuery, SparqlError> {
    let tokens: Vec<SparqlToken> = tokenize(query)
        .into_iter()
        .filter(|t| !t.is_trivia())
        .collect();
    check_braces(&tokens)?;

    let open = tokens.iter().position(|t| t.is_punct("{"));
    let (head_tokens, body, tail_tokens) = match open {
        None => (tokens.clone(), Vec::new(), Vec::new()),
        Some(open) => {
            let close = matching(&tokens, open);
            (
                tokens[..open].to_vec(),
                tokens[open + 1..close].to_vec(),
                tokens[close + 1..].to_vec(),
            )
        }
    };

    let elements = split_elements(query, &body);
    let partial = elements.iter().any(|e| match e {
        WhereElement::Opaque { .. } => true,
        WhereElement::Triple(t) => t.terms().iter().any(|term| term.is_opaque()),
    });

    Ok(ParsedQuery {
        head_text: join_text(&head_tokens),
        elements,
        tail_text: join_text(&tail_tokens),
        raw: query.to_string(),
        parse_quality: if partial {
            ParseQuality::Partial
        } else {
            ParseQuality::Full
        },
        head_tokens,
        tail_tokens,
    })
}

fn check_braces(tokens: &[SparqlToken]) -> Result<(), SparqlError> {
    let mut stack = Vec::new();
    for t in tokens {
        if t.is_punct("{") {
            stack.push(t.position);
        } else if t.is_punct("}") && stack.pop().is_none() {
            return Err(SparqlError::UnbalancedBraces { offset: t.position });
        }
    }
    match stack.last() {
        Some(&offset) => Err(SparqlError::UnbalancedBraces { offset }),
        None => Ok(()),
    }
}

/// Index of the bracket closing the one at `open`, or the last index when
/// unmatched.
fn matching(tokens: &[SparqlToken], open: usize) -> usize {
    let mut depth = 0usize;
    for (i, t) in tokens.iter().enumerate().skip(open) {
        if opens(t) {
            depth += 1;
        } else if closes(t) {
            depth = depth.saturating_sub(1);
            if depth == 0 {
                return i;
            }
        }
    }
    tokens.len().saturating_sub(1)
}

fn source_span(src: &str, tokens: &[SparqlToken]) -> String {
    match (tokens.first(), tokens.last()) {
        (Some(first), Some(last)) => src[first.position..last.end()].to_string(),
        _ => String::new(),
    }
}

fn split_elements(src: &str, body: &[SparqlToken]) -> Vec<WhereElement> {
    let mut elements = Vec::new();
    let mut i = 0;
    while i < body.len() {
        let t = &body[i];
        if t.is_punct(".") {
            i += 1;
            continue;
        }
        let end = if starts_group_element(t) {
            group_element_end(body, i)
        } else {
            block_end(body, i)
        };
        let slice = &body[i..end];
        if starts_group_element(t) {
            elements.push(WhereElement::Opaque {
                text: source_span(src, slice),
                tokens: slice.to_vec(),
            });
        } else {
            match parse_triples_block(slice) {
                Some(triples) => elements.extend(triples.into_iter().map(WhereElement::Triple)),
                None => elements.push(WhereElement::Opaque {
                    text: source_span(src, slice),
                    tokens: slice.to_vec(),
                }),
            }
        }
        i = end;
    }
    elements
}

/// End (exclusive) of a group element starting at `start`.
fn group_element_end(body: &[SparqlToken], start: usize) -> usize {
    let first = &body[start];
    if first.is_punct("{") {
        let mut end = matching(body, start) + 1;
        while end + 1 < body.len() && body[end].is_keyword("UNION") && body[end + 1].is_punct("{") {
            end = matching(body, end + 1) + 1;
        }
        return end.min(body.len());
    }
    // FILTER and BIND end with their first bracketed group; the others
    // with their first brace group.
    let any_bracket = first.is_keyword("FILTER") || first.is_keyword("BIND");
    let mut i = start + 1;
    while i < body.len() {
        let t = &body[i];
        if (any_bracket && opens(t)) || t.is_punct("{") {
            return (matching(body, i) + 1).min(body.len());
        }
        if t.is_punct(".") || (i > start + 1 && starts_group_element(t) && !t.is_punct("{")) {
            return i;
        }
        i += 1;
    }
    body.len()
}

/// End (exclusive) of a run of triples: the next top-level `.` or the start
/// of a group element.
fn block_end(body: &[SparqlToken], start: usize) -> usize {
    let mut depth = 0usize;
    for (i, t) in body.iter().enumerate().skip(start) {
        if depth == 0 && i > start && (t.is_punct(".") || starts_group_element(t)) {
            return i;
        }
        if opens(t) {
            depth += 1;
        } else if closes(t) {
            depth = depth.saturating_sub(1);
        }
    }
    body.len()
}

/// Parses `s p o (, o)* (; p o (, o)*)*`. Returns `None` when the block does
/// not have that shape.
fn parse_triples_block(tokens: &[SparqlToken]) -> Option<Vec<TriplePattern>> {
    let mut pos = 0;
    let subject = parse_term(tokens, &mut pos)?;
    let mut triples = Vec::new();
    loop {
        let predicate = parse_term(tokens, &mut pos)?;
        loop {
            let object = parse_term(tokens, &mut pos)?;
            triples.push(make_triple(&subject, &predicate, &object));
            if pos < tokens.len() && tokens[pos].is_punct(",") {
                pos += 1;
                continue;
            }
            break;
        }
        if pos < tokens.len() && tokens[pos].is_punct(";") {
            while pos < tokens.len() && tokens[pos].is_punct(";") {
                pos += 1;
            }
            if pos == tokens.len() {
                break;
            }
            continue;
        }
        break;
    }
    (pos == tokens.len()).then_some(triples)
}

fn make_triple(s: &[SparqlToken], p: &[SparqlToken], o: &[SparqlToken]) -> TriplePattern {
    TriplePattern {
        subject: classify_term(s),
        predicate: classify_term(p),
        object: classify_term(o),
        terms: [s.to_vec(), p.to_vec(), o.to_vec()],
    }
}

fn classify_term(tokens: &[SparqlToken]) -> TripleTerm {
    if let [t] = tokens {
        match t.kind {
            TokenKind::Variable => return TripleTerm::Variable(t.text.clone()),
            TokenKind::Uri => {
                if let Some(uri) = t.uri() {
                    return TripleTerm::Uri(uri);
                }
            }
            TokenKind::Literal => return TripleTerm::Literal(t.text.clone()),
            _ => {}
        }
    }
    TripleTerm::Opaque(join_text(tokens))
}

fn is_primary(t: &SparqlToken) -> bool {
    matches!(
        t.kind,
        TokenKind::Variable | TokenKind::Uri | TokenKind::Literal | TokenKind::Other
    ) || t.is_keyword("a")
        || t.is_keyword("true")
        || t.is_keyword("false")
}

/// One term: a primary, a bracketed group, or a property path built from
/// `/`, `|`, `^` and the postfix modifiers `*`, `+`, `?`.
fn parse_term<'t>(tokens: &'t [SparqlToken], pos: &mut usize) -> Option<&'t [SparqlToken]> {
    let start = *pos;
    parse_path_element(tokens, pos)?;
    while *pos < tokens.len()
        && (tokens[*pos].is_punct("/") || tokens[*pos].is_punct("|"))
    {
        *pos += 1;
        parse_path_element(tokens, pos)?;
    }
    Some(&tokens[start..*pos])
}

fn parse_path_element(tokens: &[SparqlToken], pos: &mut usize) -> Option<()> {
    while *pos < tokens.len() && tokens[*pos].is_punct("^") {
        *pos += 1;
    }
    let t = tokens.get(*pos)?;
    if t.is_punct("(") || t.is_punct("[") {
        *pos = matching(tokens, *pos) + 1;
    } else if is_primary(t) {
        *pos += 1;
    } else {
        return None;
    }
    while *pos < tokens.len() {
        let t = &tokens[*pos];
        let postfix = (t.is_punct("*") || t.is_punct("+"))
            || (t.kind == TokenKind::Other && t.text == "?");
        if !postfix {
            break;
        }
        *pos += 1;
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::UriRef;

    const EXAMPLE: &str =
        "select distinct ?sbj where { ?sbj wdt:p1040 wd:q8003 . ?sbj wdt:p31 wd:q11424 }";

    #[test]
    fn example_query_structure() {
        let parsed = parse(EXAMPLE).unwrap();
        assert_eq!(parsed.head_text, "select distinct ?sbj where");
        assert_eq!(parsed.elements.len(), 2);
        assert_eq!(parsed.tail_text, "");
        assert_eq!(parsed.parse_quality, ParseQuality::Full);
        let first = parsed.triples().next().unwrap();
        assert_eq!(first.subject, TripleTerm::Variable("?sbj".into()));
        match &first.object {
            TripleTerm::Uri(q) => assert_eq!(q.uri, UriRef::entity(8003)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_where_block() {
        let parsed = parse("select ?x where { }").unwrap();
        assert!(parsed.elements.is_empty());
        assert_eq!(parsed.parse_quality, ParseQuality::Full);
    }

    #[test]
    fn filter_is_a_single_opaque_element() {
        let q = "SELECT ?x WHERE { ?x wdt:P1082 ?y . FILTER(?y > 5) }";
        let parsed = parse(q).unwrap();
        assert_eq!(parsed.elements.len(), 2);
        assert_eq!(parsed.parse_quality, ParseQuality::Partial);
        match &parsed.elements[1] {
            WhereElement::Opaque { text, .. } => {
                assert_eq!(text, "FILTER(?y > 5)");
                assert!(q.contains(text.as_str()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn filter_without_separating_dot() {
        let q = "SELECT ?x WHERE { ?x wdt:P31 wd:Q5 FILTER(lang(?x) = 'en') ?x wdt:P27 wd:Q30 }";
        let parsed = parse(q).unwrap();
        assert_eq!(parsed.elements.len(), 3);
        assert!(matches!(parsed.elements[1], WhereElement::Opaque { .. }));
    }

    #[test]
    fn union_groups_and_optional() {
        let q = "SELECT ?x WHERE { { ?x wdt:P31 wd:Q5 } UNION { ?x wdt:P31 wd:Q6 } OPTIONAL { ?x rdfs:label ?l } }";
        let parsed = parse(q).unwrap();
        assert_eq!(parsed.elements.len(), 2);
        match &parsed.elements[0] {
            WhereElement::Opaque { text, .. } => {
                assert_eq!(text, "{ ?x wdt:P31 wd:Q5 } UNION { ?x wdt:P31 wd:Q6 }")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn predicate_object_lists_expand() {
        let parsed = parse("SELECT ?x WHERE { ?x wdt:P31 wd:Q5 , wd:Q6 ; wdt:P27 wd:Q30 . }").unwrap();
        assert_eq!(parsed.triples().count(), 3);
    }

    #[test]
    fn property_paths_are_opaque_terms() {
        let parsed = parse("SELECT ?x WHERE { ?x wdt:P31/wdt:P279* wd:Q5 }").unwrap();
        let t = parsed.triples().next().unwrap();
        assert_eq!(t.predicate, TripleTerm::Opaque("wdt:P31 / wdt:P279 *".into()));
        assert_eq!(parsed.parse_quality, ParseQuality::Partial);
    }

    #[test]
    fn tail_modifiers_are_kept() {
        let parsed =
            parse("SELECT ?x WHERE { ?x wdt:P31 wd:Q5 } ORDER BY DESC(?x) LIMIT 5").unwrap();
        assert_eq!(parsed.tail_text, "ORDER BY DESC ( ?x ) LIMIT 5");
    }

    #[test]
    fn unbalanced_braces_report_offset() {
        assert_eq!(
            parse("select ?x where { ?x wdt:p31 wd:q5").unwrap_err(),
            SparqlError::UnbalancedBraces { offset: 16 }
        );
        assert_eq!(
            parse("select ?x where ?x }").unwrap_err(),
            SparqlError::UnbalancedBraces { offset: 19 }
        );
    }
}
