use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Which memory a URI belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UriKind {
    Entity,
    Relation,
}

impl UriKind {
    /// Placeholder stem used in intermediate queries (`entity`, `relation`).
    pub fn stem(self) -> &'static str {
        match self {
            UriKind::Entity => "entity",
            UriKind::Relation => "relation",
        }
    }
}

impl fmt::Display for UriKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.stem())
    }
}

/// Namespace a Wikidata identifier was written in.
///
/// Identity of a [`UriRef`] ignores the namespace; it only matters when a
/// query has to be written back out (`p:P39` and `ps:P39` are the same
/// property but not interchangeable inside a statement pattern).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Namespace {
    /// `wd:` entities
    Wd,
    /// `wdt:` direct properties
    Wdt,
    /// `p:` statement properties
    P,
    /// `ps:` statement values
    Ps,
    /// `pq:` qualifiers
    Pq,
}

impl Namespace {
    pub fn prefix(self) -> &'static str {
        match self {
            Namespace::Wd => "wd",
            Namespace::Wdt => "wdt",
            Namespace::P => "p",
            Namespace::Ps => "ps",
            Namespace::Pq => "pq",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        match prefix.to_ascii_lowercase().as_str() {
            "wd" => Some(Namespace::Wd),
            "wdt" => Some(Namespace::Wdt),
            "p" => Some(Namespace::P),
            "ps" => Some(Namespace::Ps),
            "pq" => Some(Namespace::Pq),
            _ => None,
        }
    }

    pub fn kind(self) -> UriKind {
        match self {
            Namespace::Wd => UriKind::Entity,
            _ => UriKind::Relation,
        }
    }

    /// Default namespace for a kind, the one used by canonical text.
    pub fn default_for(kind: UriKind) -> Self {
        match kind {
            UriKind::Entity => Namespace::Wd,
            UriKind::Relation => Namespace::Wdt,
        }
    }

    fn from_iri_path(path: &str) -> Option<(Self, &str)> {
        const PATHS: [(&str, Namespace); 5] = [
            ("entity/", Namespace::Wd),
            ("prop/direct/", Namespace::Wdt),
            ("prop/statement/", Namespace::Ps),
            ("prop/qualifier/", Namespace::Pq),
            ("prop/", Namespace::P),
        ];
        PATHS
            .iter()
            .find_map(|(p, ns)| path.strip_prefix(p).map(|rest| (*ns, rest)))
    }
}

/// A Wikidata entity (Q-id) or property (P-id).
///
/// Canonical text is lowercase: `wd:q937`, `wdt:p35`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UriRef {
    kind: UriKind,
    id: u64,
}

/// A URI as it was written, namespace included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QualifiedUri {
    pub namespace: Namespace,
    pub uri: UriRef,
}

impl QualifiedUri {
    /// Lowercase prefixed form, e.g. `ps:p39`.
    pub fn canonical_text(&self) -> String {
        let letter = match self.uri.kind {
            UriKind::Entity => 'q',
            UriKind::Relation => 'p',
        };
        format!("{}:{}{}", self.namespace.prefix(), letter, self.uri.id)
    }

    /// Parses a single token: prefixed names (`wd:Q937`, `pq:P580`) or full
    /// `<http://www.wikidata.org/...>` IRIs. Case-insensitive.
    pub fn parse_token(text: &str) -> Option<Self> {
        if let Some(inner) = text.strip_prefix('<').and_then(|t| t.strip_suffix('>')) {
            return Self::parse_iri(inner);
        }
        let (prefix, local) = text.split_once(':')?;
        let namespace = Namespace::from_prefix(prefix)?;
        let uri = parse_local(local, namespace.kind())?;
        Some(QualifiedUri { namespace, uri })
    }

    fn parse_iri(iri: &str) -> Option<Self> {
        let lower = iri.to_ascii_lowercase();
        let rest = lower
            .strip_prefix("http://www.wikidata.org/")
            .or_else(|| lower.strip_prefix("https://www.wikidata.org/"))?;
        let (namespace, local) = Namespace::from_iri_path(rest)?;
        let uri = parse_local(local, namespace.kind())?;
        Some(QualifiedUri { namespace, uri })
    }
}

fn parse_local(local: &str, kind: UriKind) -> Option<UriRef> {
    let mut chars = local.chars();
    let letter = chars.next()?.to_ascii_lowercase();
    let expected = match kind {
        UriKind::Entity => 'q',
        UriKind::Relation => 'p',
    };
    if letter != expected {
        return None;
    }
    let digits = chars.as_str();
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if digits.len() > 1 && digits.starts_with('0') {
        return None;
    }
    digits.parse().ok().map(|id| UriRef { kind, id })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a Wikidata URI: {0:?}")]
pub struct UriParseError(pub String);

impl UriRef {
    pub fn entity(id: u64) -> Self {
        UriRef { kind: UriKind::Entity, id }
    }

    pub fn relation(id: u64) -> Self {
        UriRef { kind: UriKind::Relation, id }
    }

    pub fn new(kind: UriKind, id: u64) -> Self {
        UriRef { kind, id }
    }

    pub fn kind(&self) -> UriKind {
        self.kind
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn canonical_text(&self) -> String {
        self.qualified(Namespace::default_for(self.kind))
            .canonical_text()
    }

    pub fn qualified(self, namespace: Namespace) -> QualifiedUri {
        QualifiedUri { namespace, uri: self }
    }

    /// Accepts bare ids (`Q937`, `P35`), prefixed names and full IRIs.
    pub fn parse(text: &str) -> Result<Self, UriParseError> {
        let trimmed = text.trim();
        if let Some(q) = QualifiedUri::parse_token(trimmed) {
            return Ok(q.uri);
        }
        let kind = match trimmed.chars().next().map(|c| c.to_ascii_lowercase()) {
            Some('q') => UriKind::Entity,
            Some('p') => UriKind::Relation,
            _ => return Err(UriParseError(text.to_string())),
        };
        parse_local(trimmed, kind).ok_or_else(|| UriParseError(text.to_string()))
    }
}

impl fmt::Display for UriRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_text())
    }
}

impl FromStr for UriRef {
    type Err = UriParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UriRef::parse(s)
    }
}

impl Serialize for UriRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical_text())
    }
}

impl<'de> Deserialize<'de> for UriRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        UriRef::parse(&text).map_err(serde::de::Error::custom)
    }
}
