//! Two-stage retrieval (exact label, then nearest embedding) and grounding
//! of intermediate queries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::embedder::{EmbedError, EmbeddingProvider};
use super::index::Hit;
use crate::kg::{compose_key_text, Memory, Namespace, UriKind, UriRef};
use crate::sparql::tokenize;
use crate::transform::{parse_placeholder, rebuild, ParsedPgmr, PlaceholderBinding};

pub const DEFAULT_THRESHOLD: f32 = 0.85;
/// Candidates kept on each result for diagnostics.
pub const DIAGNOSTIC_CANDIDATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionMethod {
    ExactLabel,
    Embedding,
    Refused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub uri: Option<UriRef>,
    pub score: f32,
    pub method: ResolutionMethod,
    pub candidates: Vec<(UriRef, f32)>,
}

impl RetrievalResult {
    fn refused(score: f32, candidates: Vec<(UriRef, f32)>) -> Self {
        RetrievalResult {
            uri: None,
            score,
            method: ResolutionMethod::Refused,
            candidates,
        }
    }

    pub fn is_refused(&self) -> bool {
        self.method == ResolutionMethod::Refused
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("binding {name} is a {binding} placeholder but the memory holds {memory} URIs")]
    KindMismatch {
        name: String,
        binding: UriKind,
        memory: UriKind,
    },
    #[error("memory has no embeddings; embed it before retrieval")]
    NotEmbedded,
    #[error("embedding dimension {embedder} does not match memory dimension {memory}")]
    DimensionMismatch { embedder: usize, memory: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Retriever knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrieverOptions {
    /// Minimum cosine for an embedding match. Exact label matches are never
    /// thresholded. 0 (or below) disables refusal.
    pub threshold: f32,
    /// When several records share the label, search only among them rather
    /// than the whole memory.
    pub restrict_ties: bool,
}

impl Default for RetrieverOptions {
    fn default() -> Self {
        RetrieverOptions {
            threshold: DEFAULT_THRESHOLD,
            restrict_ties: false,
        }
    }
}

impl RetrieverOptions {
    pub fn with_threshold(threshold: f32) -> Self {
        RetrieverOptions {
            threshold,
            ..Self::default()
        }
    }
}

/// Resolves one binding against `memory`.
///
/// A unique normalized-label hit is returned directly with score 1.0 and
/// the embedder is not called. Otherwise the binding's `Label. Description`
/// text is embedded and matched to the nearest memory key; a best score
/// under the threshold is a refusal.
pub fn retrieve(
    binding: &PlaceholderBinding,
    memory: &Memory,
    embedder: &dyn EmbeddingProvider,
    options: RetrieverOptions,
) -> Result<RetrievalResult, RetrievalError> {
    if binding.kind != memory.kind() {
        return Err(RetrievalError::KindMismatch {
            name: binding.name.clone(),
            binding: binding.kind,
            memory: memory.kind(),
        });
    }
    if memory.is_empty() {
        return Ok(RetrievalResult::refused(-1.0, Vec::new()));
    }

    let hits = memory.lookup_label(&binding.label);
    if let [only] = hits {
        return Ok(RetrievalResult {
            uri: Some(*only),
            score: 1.0,
            method: ResolutionMethod::ExactLabel,
            candidates: vec![(*only, 1.0)],
        });
    }

    let index = memory.vector_index();
    if index.is_empty() {
        return Err(RetrievalError::NotEmbedded);
    }
    if index.dimension() != embedder.dimension() {
        return Err(RetrievalError::DimensionMismatch {
            embedder: embedder.dimension(),
            memory: index.dimension(),
        });
    }
    let query = embedder.embed(&compose_key_text(&binding.label, &binding.description))?;
    let allow = (options.restrict_ties && hits.len() > 1).then_some(hits);
    let found = index.search(&query, DIAGNOSTIC_CANDIDATES, allow);
    let candidates: Vec<(UriRef, f32)> = found.iter().map(|h| (h.uri, h.score)).collect();
    match found.first() {
        Some(Hit { uri, score }) if options.threshold <= 0.0 || *score >= options.threshold => {
            Ok(RetrievalResult {
                uri: Some(*uri),
                score: *score,
                method: ResolutionMethod::Embedding,
                candidates,
            })
        }
        Some(best) => Ok(RetrievalResult::refused(best.score, candidates)),
        None => Ok(RetrievalResult::refused(-1.0, candidates)),
    }
}

/// Outcome of grounding one intermediate query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GroundingStatus {
    Grounded { sparql: String },
    /// Placeholders whose best match fell under the threshold.
    Refusal { placeholders: Vec<String> },
    /// Model output could not be parsed or referenced unbound placeholders.
    Malformed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingOutcome {
    pub status: GroundingStatus,
    pub resolutions: BTreeMap<String, RetrievalResult>,
}

impl GroundingOutcome {
    pub fn malformed(reason: impl Into<String>) -> Self {
        GroundingOutcome {
            status: GroundingStatus::Malformed {
                reason: reason.into(),
            },
            resolutions: BTreeMap::new(),
        }
    }

    pub fn sparql(&self) -> Option<&str> {
        match &self.status {
            GroundingStatus::Grounded { sparql } => Some(sparql),
            _ => None,
        }
    }

    pub fn is_refusal(&self) -> bool {
        matches!(self.status, GroundingStatus::Refusal { .. })
    }

    /// Number of placeholders looked up in memory.
    pub fn lookups(&self) -> usize {
        self.resolutions.len()
    }
}

/// Replaces every placeholder with its retrieved URI. Any refusal refuses
/// the whole query; no partial query is produced.
pub fn ground_query(
    parsed: &ParsedPgmr,
    entity_mem: &Memory,
    relation_mem: &Memory,
    embedder: &dyn EmbeddingProvider,
    options: RetrieverOptions,
) -> Result<GroundingOutcome, RetrievalError> {
    if !parsed.is_complete() {
        return Ok(GroundingOutcome::malformed(format!(
            "unbound placeholders: {}",
            parsed.missing.join(", ")
        )));
    }
    let iq = &parsed.query;
    let mut resolutions = BTreeMap::new();
    let mut refused = Vec::new();
    for binding in &iq.bindings {
        let memory = match binding.kind {
            UriKind::Entity => entity_mem,
            UriKind::Relation => relation_mem,
        };
        let result = retrieve(binding, memory, embedder, options)?;
        if result.is_refused() {
            refused.push(binding.name.clone());
        }
        resolutions.insert(binding.name.clone(), result);
    }
    if !refused.is_empty() {
        return Ok(GroundingOutcome {
            status: GroundingStatus::Refusal {
                placeholders: refused,
            },
            resolutions,
        });
    }

    let tokens = tokenize(&iq.template);
    let sparql = rebuild(&tokens, |token| {
        let placeholder = parse_placeholder(&token.text)?;
        let uri = resolutions.get(&placeholder.name)?.uri?;
        let namespace = placeholder
            .namespace
            .unwrap_or_else(|| Namespace::default_for(uri.kind()));
        Some(uri.qualified(namespace).canonical_text())
    });
    Ok(GroundingOutcome {
        status: GroundingStatus::Grounded { sparql },
        resolutions,
    })
}

/// Top-`k` records by cosine between `question` and the record keys, best
/// first. Used to build retrieval-augmented prompts.
pub fn retrieve_topk_for_question(
    question: &str,
    memory: &Memory,
    embedder: &dyn EmbeddingProvider,
    k: usize,
) -> Result<Vec<(UriRef, f32)>, RetrievalError> {
    let index = memory.vector_index();
    if memory.is_empty() {
        return Ok(Vec::new());
    }
    if index.is_empty() {
        return Err(RetrievalError::NotEmbedded);
    }
    let query = embedder.embed(question)?;
    Ok(index
        .search(&query, k.max(1), None)
        .into_iter()
        .map(|h| (h.uri, h.score))
        .collect())
}
