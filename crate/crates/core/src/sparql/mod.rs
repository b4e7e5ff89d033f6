//! Tokenizer, structural parser and canonical form for a restricted SPARQL
//! dialect (SELECT/ASK heads, one top-level WHERE block, trailing
//! modifiers).

mod canonical;
mod lexer;
mod parser;

use std::collections::BTreeSet;

pub use canonical::{canonicalize, canonicalize_with, CanonicalOptions, CanonicalQuery};
pub use lexer::{detokenize, is_keyword, tokenize, SparqlToken, TokenKind};
pub use parser::{parse, ParseQuality, ParsedQuery, TriplePattern, TripleTerm, WhereElement};

use crate::kg::{UriKind, UriRef};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SparqlError {
    #[error("unbalanced braces at byte offset {offset}")]
    UnbalancedBraces { offset: usize },
}

/// Entity and relation URIs mentioned anywhere in `query`, deduplicated and
/// case-normalized.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UriSets {
    pub entities: BTreeSet<UriRef>,
    pub relations: BTreeSet<UriRef>,
}

impl UriSets {
    pub fn of_kind(&self, kind: UriKind) -> &BTreeSet<UriRef> {
        match kind {
            UriKind::Entity => &self.entities,
            UriKind::Relation => &self.relations,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = UriRef> + '_ {
        self.entities.iter().chain(&self.relations).copied()
    }

    pub fn len(&self) -> usize {
        self.entities.len() + self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn extract_uris(query: &str) -> UriSets {
    let mut sets = UriSets::default();
    for token in tokenize(query) {
        if let Some(q) = token.uri() {
            match q.uri.kind() {
                UriKind::Entity => sets.entities.insert(q.uri),
                UriKind::Relation => sets.relations.insert(q.uri),
            };
        }
    }
    sets
}
