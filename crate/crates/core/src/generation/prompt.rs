use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kg::UriRef;
use crate::transform::parse_pgmr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Direct,
    Rag,
    Pgmr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub mode: PromptMode,
    pub shots: Vec<Exemplar>,
    /// Number of retrieved URIs listed in retrieval-augmented prompts.
    pub k: usize,
    pub instructions: String,
}

/// A retrieved URI as listed in a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedUri {
    pub uri: UriRef,
    pub label: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("retrieval-augmented prompts need k >= 1")]
    ZeroK,
    #[error("retrieval-augmented prompt built without retrieved URIs")]
    MissingRetrieved,
    #[error("{got} retrieved URIs supplied, prompt expects at most {k}")]
    TooManyRetrieved { got: usize, k: usize },
    #[error("operation needs a {expected:?} prompt, got {got:?}")]
    WrongMode { expected: PromptMode, got: PromptMode },
    #[error("exemplar {index} is not a valid intermediate query")]
    InvalidExemplar { index: usize },
}

pub const DEFAULT_RAG_K: usize = 10;

const DIRECT_INSTRUCTIONS: &str = "Translate the question into a SPARQL query over Wikidata. \
Use wd: prefixes for entities and wdt: prefixes for properties. Answer with the query only.";

const RAG_INSTRUCTIONS: &str = "Translate the question into a SPARQL query over Wikidata. \
Use wd: prefixes for entities and wdt: prefixes for properties. Candidate URIs retrieved for \
the question are listed with their labels and descriptions; use them where they fit. Answer \
with the query only.";

const PGMR_INSTRUCTIONS: &str = "Translate the question into an intermediate SPARQL query. \
Write the query structure with the placeholders entity1, entity2, ... for entities and \
relation1, relation2, ... for properties instead of URIs. After a blank line, define every \
placeholder on its own line as `entityN = [ENT] label [/ENT] description` or \
`relationN = [REL] label [/REL] description`.";

pub fn default_instructions(mode: PromptMode) -> &'static str {
    match mode {
        PromptMode::Direct => DIRECT_INSTRUCTIONS,
        PromptMode::Rag => RAG_INSTRUCTIONS,
        PromptMode::Pgmr => PGMR_INSTRUCTIONS,
    }
}

impl PromptSpec {
    /// Spec with the default instructions for `mode`. Intermediate-query
    /// exemplars are validated.
    pub fn new(mode: PromptMode, shots: Vec<Exemplar>, k: usize) -> Result<Self, PromptError> {
        let spec = PromptSpec {
            mode,
            shots,
            k,
            instructions: default_instructions(mode).to_string(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.mode == PromptMode::Rag && self.k == 0 {
            return Err(PromptError::ZeroK);
        }
        if self.mode == PromptMode::Pgmr {
            for (index, shot) in self.shots.iter().enumerate() {
                match parse_pgmr(&shot.target) {
                    Ok(p) if p.is_complete() => {}
                    _ => return Err(PromptError::InvalidExemplar { index }),
                }
            }
        }
        Ok(())
    }

    /// Reorders the exemplars with a seeded shuffle.
    pub fn shuffled(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.shots.shuffle(&mut rng);
        self
    }
}

/// Builds the prompt text: instructions, exemplars, the retrieved URI block
/// (retrieval-augmented mode only), then the question.
pub fn build_prompt(
    spec: &PromptSpec,
    question: &str,
    retrieved: Option<&[RetrievedUri]>,
) -> Result<String, PromptError> {
    let mut out = String::new();
    out.push_str(spec.instructions.trim());
    out.push_str("\n\n");
    for shot in &spec.shots {
        out.push_str("Question: ");
        out.push_str(shot.question.trim());
        out.push_str("\nQuery:\n");
        out.push_str(shot.target.trim());
        out.push_str("\n\n");
    }
    if spec.mode == PromptMode::Rag {
        if spec.k == 0 {
            return Err(PromptError::ZeroK);
        }
        let retrieved = retrieved.ok_or(PromptError::MissingRetrieved)?;
        if retrieved.len() > spec.k {
            return Err(PromptError::TooManyRetrieved {
                got: retrieved.len(),
                k: spec.k,
            });
        }
        out.push_str("Candidate URIs:\n");
        for r in retrieved {
            out.push_str(&format!("{} | {} | {}\n", r.uri, r.label, r.description));
        }
        out.push('\n');
    }
    out.push_str("Question: ");
    out.push_str(question.trim());
    out.push_str("\nQuery:\n");
    Ok(out)
}
