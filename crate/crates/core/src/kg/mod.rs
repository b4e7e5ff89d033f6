//! Knowledge-graph metadata and the entity/relation memories.

mod distractors;
mod memory;
mod record;
mod snapshot;
mod uri;

pub use distractors::{load_distractors, synthetic_distractors};
pub use memory::{parse_metadata, read_metadata, removal_count, write_metadata, Memory};
pub use record::{compose_key_text, normalize_label, EmptyLabel, KgRecord, MetadataLine};
pub use snapshot::{load_snapshot, open_memory, read_snapshot, save_snapshot, write_snapshot};
pub use uri::{Namespace, QualifiedUri, UriKind, UriParseError, UriRef};

use crate::retrieval::EmbedError;

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate URI {uri}{}", line_suffix(.line))]
    DuplicateUri { line: Option<usize>, uri: UriRef },
    #[error("URI {uri} is not of kind {expected}{}", line_suffix(.line))]
    KindMismatch {
        line: Option<usize>,
        uri: UriRef,
        expected: UriKind,
    },
    #[error("embedding for {uri} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        uri: UriRef,
        expected: usize,
        got: usize,
    },
    #[error("embedding failed for {uri}: {source}")]
    Embedding {
        uri: UriRef,
        #[source]
        source: EmbedError,
    },
    #[error("fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    #[error("scaling factor must be at least 1, got {0}")]
    InvalidFactor(usize),
    #[error("memory is empty")]
    EmptyMemory,
    #[error("distractor {0} collides with an existing URI")]
    Collision(UriRef),
    #[error("need {needed} distractors, only {available} available")]
    InsufficientDistractors { needed: usize, available: usize },
    #[error("invalid snapshot: {0}")]
    Snapshot(String),
}

fn line_suffix(line: &Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}
