//! LLM generation: provider contract, chat client, record/replay fixtures
//! and prompt builders.

mod chat;
mod prompt;
mod provider;

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

pub use chat::{ChatClient, ChatConfig, ENV_API_KEY, ENV_BASE_URL, ENV_MODEL};
pub use prompt::{
    build_prompt, default_instructions, Exemplar, PromptError, PromptMode, PromptSpec,
    RetrievedUri, DEFAULT_RAG_K,
};
pub use provider::{
    prompt_hash, read_fixture, write_fixture, FixtureEntry, FixtureError, GenerationError,
    GenerationParams, GenerationProvider, ReplayProvider,
};

use crate::transform::{parse_pgmr, ParsedPgmr, PgmrError};

/// Raw and parsed model output for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub prompt: String,
    pub output: String,
    pub parsed: Result<ParsedPgmr, PgmrError>,
}

/// Prompts the provider for an intermediate query and parses the answer.
/// Parse defects are returned in `parsed`, not as an error.
pub fn generate_intermediate(
    question: &str,
    provider: &dyn GenerationProvider,
    spec: &PromptSpec,
    params: &GenerationParams,
) -> Result<Generated, GenerationError> {
    if spec.mode != PromptMode::Pgmr {
        return Err(PromptError::WrongMode {
            expected: PromptMode::Pgmr,
            got: spec.mode,
        }
        .into());
    }
    let prompt = build_prompt(spec, question, None)?;
    let output = provider.generate(&prompt, params)?;
    let parsed = parse_pgmr(&output);
    Ok(Generated {
        prompt,
        output,
        parsed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecordSummary {
    /// Entries in the written fixture.
    pub entries: usize,
    /// Prompts answered from an existing successful entry.
    pub reused: usize,
    /// Prompts sent to the provider.
    pub requested: usize,
    /// Requests that failed and were recorded as errors.
    pub failures: usize,
}

/// Sends each distinct prompt to `provider` and writes the fixture.
///
/// An existing fixture at `path` is merged: its successful entries are
/// reused, failed entries are retried, and its line order is kept with new
/// prompts appended in input order. At most `in_flight` requests run at
/// once; the file is written once, at the end.
pub fn record_prompts(
    prompts: &[String],
    provider: &dyn GenerationProvider,
    params: &GenerationParams,
    path: &Path,
    in_flight: usize,
) -> Result<RecordSummary, FixtureError> {
    let mut entries = if path.exists() {
        read_fixture(path)?
    } else {
        Vec::new()
    };
    let mut position: HashMap<String, usize> = HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        position.insert(e.prompt_hash.clone(), i);
    }

    let mut summary = RecordSummary::default();
    let mut pending: Vec<&str> = Vec::new();
    let mut pending_hashes = std::collections::HashSet::new();
    for prompt in prompts {
        let hash = prompt_hash(prompt);
        match position.get(&hash) {
            Some(&i) if entries[i].output.is_some() => summary.reused += 1,
            _ => {
                if pending_hashes.insert(hash) {
                    pending.push(prompt);
                }
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(in_flight.max(1))
        .build()
        .map_err(|e| FixtureError::Io(std::io::Error::other(e)))?;
    let results: Vec<FixtureEntry> = pool.install(|| {
        pending
            .par_iter()
            .map(|prompt| match provider.generate(prompt, params) {
                Ok(out) => FixtureEntry::success(prompt, &out),
                Err(e) => {
                    log::warn!("generation failed for prompt {}: {e}", prompt_hash(prompt));
                    FixtureEntry::failure(prompt, &e)
                }
            })
            .collect()
    });

    summary.requested = results.len();
    for entry in results {
        if entry.output.is_none() {
            summary.failures += 1;
        }
        match position.get(&entry.prompt_hash) {
            Some(&i) => entries[i] = entry,
            None => {
                position.insert(entry.prompt_hash.clone(), entries.len());
                entries.push(entry);
            }
        }
    }
    summary.entries = entries.len();
    write_fixture(path, &entries)?;
    Ok(summary)
}

/// Builds a prompt per question and records the provider's answers.
/// Retrieval-augmented specs need per-question URI lists; build those
/// prompts yourself and use [`record_prompts`].
pub fn record_session(
    questions: &[String],
    provider: &dyn GenerationProvider,
    spec: &PromptSpec,
    params: &GenerationParams,
    path: &Path,
    in_flight: usize,
) -> Result<RecordSummary, GenerationError> {
    let prompts = questions
        .iter()
        .map(|q| build_prompt(spec, q, None))
        .collect::<Result<Vec<_>, _>>()?;
    record_prompts(&prompts, provider, params, path, in_flight)
        .map_err(|e| GenerationError::Transport(format!("writing fixture: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Echo {
        calls: AtomicUsize,
        fail_on: Option<&'static str>,
    }

    impl GenerationProvider for Echo {
        fn generate(&self, prompt: &str, _: &GenerationParams) -> Result<String, GenerationError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.fail_on.is_some_and(|f| prompt.contains(f)) {
                return Err(GenerationError::Transport("connection reset".into()));
            }
            Ok(format!("select ?x where {{ ?x ?p \"{}\" }}", prompt.len()))
        }
    }

    fn questions() -> Vec<String> {
        vec!["one?".into(), "two?".into(), "three?".into()]
    }

    #[test]
    fn record_three_then_rerun_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.jsonl");
        let spec = PromptSpec::new(PromptMode::Direct, vec![], 0).unwrap();
        let echo = Echo {
            calls: AtomicUsize::new(0),
            fail_on: None,
        };
        let params = GenerationParams::default();
        let s = record_session(&questions(), &echo, &spec, &params, &path, 2).unwrap();
        assert_eq!(s.entries, 3);
        let first = std::fs::read(&path).unwrap();
        let s = record_session(&questions(), &echo, &spec, &params, &path, 2).unwrap();
        assert_eq!(s.reused, 3);
        assert_eq!(std::fs::read(&path).unwrap(), first);

        std::fs::remove_file(&path).unwrap();
        record_session(&questions(), &echo, &spec, &params, &path, 1).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn failures_recorded_and_run_continues() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.jsonl");
        let spec = PromptSpec::new(PromptMode::Direct, vec![], 0).unwrap();
        let echo = Echo {
            calls: AtomicUsize::new(0),
            fail_on: Some("two?"),
        };
        let s =
            record_session(&questions(), &echo, &spec, &GenerationParams::default(), &path, 1)
                .unwrap();
        assert_eq!((s.entries, s.failures), (3, 1));
        let entries = read_fixture(&path).unwrap();
        assert!(entries[1].error.as_deref().unwrap().contains("connection reset"));
        assert!(entries[2].output.is_some());
    }

    #[test]
    fn non_intermediate_output_is_reported_not_raised() {
        let spec = PromptSpec::new(PromptMode::Pgmr, vec![], 0).unwrap();
        let prompt = build_prompt(&spec, "q", None).unwrap();
        let replay = ReplayProvider::from_entries([FixtureEntry::success(
            &prompt,
            "I am sorry, I cannot answer that.",
        )]);
        let g = generate_intermediate("q", &replay, &spec, &GenerationParams::default()).unwrap();
        assert_eq!(g.parsed, Err(PgmrError::NoQueryBlock));
    }

    #[test]
    fn wrong_mode_rejected() {
        let spec = PromptSpec::new(PromptMode::Direct, vec![], 0).unwrap();
        let replay = ReplayProvider::default();
        assert!(matches!(
            generate_intermediate("q", &replay, &spec, &GenerationParams::default()),
            Err(GenerationError::Prompt(PromptError::WrongMode { .. }))
        ));
    }
}
