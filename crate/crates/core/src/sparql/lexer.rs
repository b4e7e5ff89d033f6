//! Lossless tokenizer for the supported SPARQL dialect.

use serde::{Deserialize, Serialize};

use crate::kg::QualifiedUri;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Keyword,
    Variable,
    /// A recognized Wikidata entity or property reference.
    Uri,
    Literal,
    Punct,
    Whitespace,
    /// Anything else: other IRIs and prefixed names, bare words, comments,
    /// stray characters.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparqlToken {
    pub kind: TokenKind,
    pub text: String,
    /// Byte offset into the tokenized string.
    pub position: usize,
}

impl SparqlToken {
    pub fn is_trivia(&self) -> bool {
        self.kind == TokenKind::Whitespace || self.is_comment()
    }

    pub fn is_comment(&self) -> bool {
        self.kind == TokenKind::Other && self.text.starts_with('#')
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == p
    }

    pub fn is_keyword(&self, k: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text.eq_ignore_ascii_case(k)
    }

    pub fn end(&self) -> usize {
        self.position + self.text.len()
    }

    /// The URI this token denotes, if it is a `Uri` token.
    pub fn uri(&self) -> Option<QualifiedUri> {
        if self.kind == TokenKind::Uri {
            QualifiedUri::parse_token(&self.text)
        } else {
            None
        }
    }
}

const KEYWORDS: &[&str] = &[
    "SELECT", "ASK", "CONSTRUCT", "DESCRIBE", "DISTINCT", "REDUCED", "WHERE", "FILTER",
    "OPTIONAL", "UNION", "MINUS", "BIND", "VALUES", "SERVICE", "GRAPH", "LIMIT", "OFFSET",
    "ORDER", "GROUP", "BY", "HAVING", "ASC", "DESC", "AS", "PREFIX", "BASE", "COUNT", "SUM",
    "MIN", "MAX", "AVG", "SAMPLE", "GROUP_CONCAT", "SEPARATOR", "NOT", "EXISTS", "IN", "STR",
    "LANG", "LANGMATCHES", "CONTAINS", "STRSTARTS", "STRENDS", "REGEX", "LCASE", "UCASE",
    "YEAR", "MONTH", "DAY", "NOW", "BOUND", "IF", "COALESCE", "ISIRI", "ISURI", "ISLITERAL",
    "DATATYPE", "STRLEN", "SUBSTR", "ABS", "ROUND", "CEIL", "FLOOR", "UNDEF", "TRUE", "FALSE",
    "A",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

const TWO_CHAR_PUNCT: &[&str] = &["&&", "||", "!=", "<=", ">=", "^^"];
const ONE_CHAR_PUNCT: &str = "{}()[].,;*=<>!+-/|^";

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

fn is_name_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    tokens: Vec<SparqlToken>,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn emit(&mut self, kind: TokenKind, len: usize) {
        let text = self.src[self.pos..self.pos + len].to_string();
        self.tokens.push(SparqlToken {
            kind,
            text,
            position: self.pos,
        });
        self.pos += len;
    }

    fn run(mut self) -> Vec<SparqlToken> {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                let len = span_while(self.rest(), char::is_whitespace);
                self.emit(TokenKind::Whitespace, len);
            } else if c == '#' {
                let len = self.rest().find('\n').unwrap_or(self.rest().len());
                self.emit(TokenKind::Other, len);
            } else if (c == '?' || c == '$') && self.peek_at(1).is_some_and(is_name_char) {
                let len = 1 + span_while(&self.rest()[1..], is_name_char);
                self.emit(TokenKind::Variable, len);
            } else if c == '"' || c == '\'' {
                self.literal(c);
            } else if c == '<' {
                self.angle();
            } else if c.is_ascii_digit() {
                self.number();
            } else if is_name_start(c) || (c == ':' && self.peek_at(1).is_some_and(is_name_char)) {
                self.name();
            } else if let Some(p) = TWO_CHAR_PUNCT.iter().find(|p| self.rest().starts_with(**p)) {
                self.emit(TokenKind::Punct, p.len());
            } else if ONE_CHAR_PUNCT.contains(c) {
                self.emit(TokenKind::Punct, 1);
            } else {
                self.emit(TokenKind::Other, c.len_utf8());
            }
        }
        self.tokens
    }

    fn literal(&mut self, quote: char) {
        let rest = self.rest();
        let triple: String = std::iter::repeat(quote).take(3).collect();
        let (open, close) = if rest.starts_with(&triple) {
            (3, triple.clone())
        } else {
            (1, quote.to_string())
        };
        let mut len = open;
        let bytes = rest.as_bytes();
        let mut closed = false;
        while len < rest.len() {
            if bytes[len] == b'\\' {
                len += 1;
                if len < rest.len() {
                    len += rest[len..].chars().next().map_or(1, char::len_utf8);
                }
                continue;
            }
            if rest[len..].starts_with(&close) {
                len += close.len();
                closed = true;
                break;
            }
            len += rest[len..].chars().next().map_or(1, char::len_utf8);
        }
        if closed {
            let suffix = &rest[len..];
            if let Some(tag) = suffix.strip_prefix('@') {
                let tag_len = span_while(tag, |c| c.is_ascii_alphanumeric() || c == '-');
                if tag_len > 0 {
                    len += 1 + tag_len;
                }
            } else if let Some(dt) = suffix.strip_prefix("^^") {
                let dt_len = if dt.starts_with('<') {
                    dt.find('>').map_or(0, |i| i + 1)
                } else {
                    prefixed_name_len(dt)
                };
                if dt_len > 0 {
                    len += 2 + dt_len;
                }
            }
        }
        self.emit(TokenKind::Literal, len);
    }

    fn angle(&mut self) {
        let rest = self.rest();
        let iri_len = rest[1..]
            .char_indices()
            .find(|(_, c)| *c == '>' || c.is_whitespace() || matches!(c, '<' | '"' | '{' | '}'))
            .and_then(|(i, c)| (c == '>').then_some(i + 2));
        match iri_len {
            Some(len) => {
                let kind = if QualifiedUri::parse_token(&rest[..len]).is_some() {
                    TokenKind::Uri
                } else {
                    TokenKind::Other
                };
                self.emit(kind, len);
            }
            None if rest.starts_with("<=") => self.emit(TokenKind::Punct, 2),
            None => self.emit(TokenKind::Punct, 1),
        }
    }

    fn number(&mut self) {
        let rest = self.rest();
        let mut len = span_while(rest, |c| c.is_ascii_digit());
        if rest[len..].starts_with('.')
            && rest[len + 1..].chars().next().is_some_and(|c| c.is_ascii_digit())
        {
            len += 1 + span_while(&rest[len + 1..], |c| c.is_ascii_digit());
        }
        if rest[len..].starts_with(['e', 'E']) {
            let after = &rest[len + 1..];
            let sign = usize::from(after.starts_with(['+', '-']));
            let digits = span_while(&after[sign..], |c| c.is_ascii_digit());
            if digits > 0 {
                len += 1 + sign + digits;
            }
        }
        self.emit(TokenKind::Literal, len);
    }

    fn name(&mut self) {
        let rest = self.rest();
        let len = prefixed_name_len(rest);
        let text = &rest[..len];
        let kind = if text.contains(':') {
            if QualifiedUri::parse_token(text).is_some() {
                TokenKind::Uri
            } else {
                TokenKind::Other
            }
        } else if is_keyword(text) {
            TokenKind::Keyword
        } else {
            TokenKind::Other
        };
        self.emit(kind, len);
    }
}

/// Length of a bare word or `prefix:local` name at the start of `s`.
/// A trailing `.` is never part of the name.
fn prefixed_name_len(s: &str) -> usize {
    let mut len = span_while(s, is_name_char);
    if s[len..].starts_with(':') {
        len += 1;
        let local = span_while(&s[len..], |c| is_name_char(c) || c == '.' || c == '%');
        let trimmed = s[len..len + local].trim_end_matches('.').len();
        len += trimmed;
    }
    len
}

fn span_while(s: &str, pred: impl Fn(char) -> bool) -> usize {
    s.char_indices()
        .find(|(_, c)| !pred(*c))
        .map_or(s.len(), |(i, _)| i)
}

/// Splits `query` into tokens whose texts concatenate back to `query`.
pub fn tokenize(query: &str) -> Vec<SparqlToken> {
    Lexer {
        src: query,
        pos: 0,
        tokens: Vec::new(),
    }
    .run()
}

pub fn detokenize(tokens: &[SparqlToken]) -> String {
    tokens.iter().map(|t| t.text.as_str()).collect()
}
