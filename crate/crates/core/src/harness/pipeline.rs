//! Per-question execution of the direct, retrieval-augmented and
//! intermediate-query pipelines.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::DatasetSample;
use crate::generation::{
    build_prompt, prompt_hash, GenerationParams, GenerationProvider, PromptError, PromptMode,
    PromptSpec, RetrievedUri,
};
use crate::kg::{Memory, UriKind, UriRef};
use crate::metrics::{
    answer_f1, judge, AnswerScore, EvalReport, Prediction, QueryPairJudgment, SparqlEndpoint,
};
use crate::retrieval::{
    ground_query, retrieve_topk_for_question, EmbeddingProvider, GroundingOutcome,
    GroundingStatus, RetrievalError, RetrievalResult, RetrieverOptions,
};
use crate::transform::parse_pgmr;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Relative gap between measured and decomposed pipeline time that is
/// still reported as consistent.
pub const TIMING_NOISE_BOUND: f64 = 0.10;

/// Read-only inputs shared by every sample of a run.
#[derive(Clone, Copy)]
pub struct Resources<'a> {
    pub entity_mem: &'a Memory,
    pub relation_mem: &'a Memory,
    pub embedder: &'a dyn EmbeddingProvider,
    pub provider: &'a dyn GenerationProvider,
    pub endpoint: Option<&'a dyn SparqlEndpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub spec: PromptSpec,
    pub params: GenerationParams,
    pub retriever: RetrieverOptions,
    pub workers: usize,
}

impl RunSettings {
    pub fn mode(&self) -> PromptMode {
        self.spec.mode
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordOutcome {
    Query,
    Refused { placeholders: Vec<String> },
    Malformed { reason: String },
    GenerationFailed { error: String },
    RetrievalFailed { error: String },
}

/// Deterministic per-question record. Timing lives in [`SampleTiming`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub question: String,
    pub gold_sparql: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retrieved: Vec<UriRef>,
    pub raw_output: Option<String>,
    pub predicted_sparql: Option<String>,
    pub outcome: RecordOutcome,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub resolutions: BTreeMap<String, RetrievalResult>,
    pub judgment: QueryPairJudgment,
}

impl QueryRecord {
    /// Placeholder lookups performed while grounding.
    pub fn lookups(&self) -> usize {
        self.resolutions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTiming {
    pub id: String,
    pub generation_s: f64,
    /// Time spent grounding placeholders (all lookups together).
    pub retrieval_s: f64,
    /// Question-side retrieval for augmented prompts.
    pub prompt_retrieval_s: f64,
    pub total_s: f64,
    pub lookups: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingSummary {
    pub t_generation_mean: f64,
    /// Mean time of one placeholder lookup.
    pub t_retrieval_mean: f64,
    pub k_mean: f64,
    pub t_pipeline_mean: f64,
    /// `t_generation_mean + k_mean · t_retrieval_mean`.
    pub t_decomposed_mean: f64,
    pub relative_error: f64,
    pub noise_bound: f64,
    pub within_bound: bool,
}

impl TimingSummary {
    pub fn from_timings(timings: &[SampleTiming]) -> Self {
        let n = timings.len();
        if n == 0 {
            return TimingSummary {
                noise_bound: TIMING_NOISE_BOUND,
                within_bound: true,
                ..Default::default()
            };
        }
        let nf = n as f64;
        let gen: f64 = timings.iter().map(|t| t.generation_s + t.prompt_retrieval_s).sum();
        let ret: f64 = timings.iter().map(|t| t.retrieval_s).sum();
        let lookups: usize = timings.iter().map(|t| t.lookups).sum();
        let total: f64 = timings.iter().map(|t| t.total_s).sum();
        let t_generation_mean = gen / nf;
        let t_retrieval_mean = if lookups == 0 { 0.0 } else { ret / lookups as f64 };
        let k_mean = lookups as f64 / nf;
        let t_pipeline_mean = total / nf;
        let t_decomposed_mean = t_generation_mean + k_mean * t_retrieval_mean;
        let relative_error = if t_pipeline_mean > 0.0 {
            (t_pipeline_mean - t_decomposed_mean).abs() / t_pipeline_mean
        } else {
            0.0
        };
        TimingSummary {
            t_generation_mean,
            t_retrieval_mean,
            k_mean,
            t_pipeline_mean,
            t_decomposed_mean,
            relative_error,
            noise_bound: TIMING_NOISE_BOUND,
            within_bound: relative_error <= TIMING_NOISE_BOUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub mode: PromptMode,
    pub threshold: f32,
    pub k: usize,
    pub shots: usize,
    pub eval: EvalReport,
    pub generation_failures: usize,
    pub retrieval_failures: usize,
    pub timing: TimingSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub summary: RunSummary,
    pub records: Vec<QueryRecord>,
    pub timings: Vec<SampleTiming>,
}

/// Prompt for one question, with the URIs listed in it for augmented
/// prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPrompt {
    pub prompt: String,
    pub retrieved: Vec<RetrievedUri>,
}

#[derive(Debug, thiserror::Error)]
pub enum PrepareError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("question retrieval: {0}")]
    Retrieval(#[from] RetrievalError),
}

/// Top-`k` URIs for the question across both memories, best first; equal
/// scores list entities first, then lower ids.
pub fn retrieve_for_prompt(
    question: &str,
    res: &Resources<'_>,
    k: usize,
) -> Result<Vec<RetrievedUri>, RetrievalError> {
    let mut scored: Vec<(UriRef, f32)> = Vec::new();
    for memory in [res.entity_mem, res.relation_mem] {
        scored.extend(retrieve_topk_for_question(question, memory, res.embedder, k)?);
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (a.0.kind() == UriKind::Relation).cmp(&(b.0.kind() == UriKind::Relation)))
            .then_with(|| a.0.id().cmp(&b.0.id()))
    });
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(uri, _)| {
            let memory = match uri.kind() {
                UriKind::Entity => res.entity_mem,
                UriKind::Relation => res.relation_mem,
            };
            let record = memory.get(uri).expect("hit comes from this memory");
            RetrievedUri {
                uri,
                label: record.label().to_string(),
                description: record.description().to_string(),
            }
        })
        .collect())
}

pub fn prepare_prompt(
    question: &str,
    spec: &PromptSpec,
    res: &Resources<'_>,
) -> Result<PreparedPrompt, PrepareError> {
    let retrieved = if spec.mode == PromptMode::Rag {
        retrieve_for_prompt(question, res, spec.k)?
    } else {
        Vec::new()
    };
    let list = (spec.mode == PromptMode::Rag).then_some(retrieved.as_slice());
    let prompt = build_prompt(spec, question, list)?;
    Ok(PreparedPrompt { prompt, retrieved })
}

/// Model output for one question, cached so experiments can re-ground
/// without calling the provider again.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedOutput {
    pub prompt_hash: Option<String>,
    pub retrieved: Vec<UriRef>,
    pub output: Result<String, String>,
    pub generation: Duration,
    pub prompt_retrieval: Duration,
}

pub fn generate_one(
    sample: &DatasetSample,
    settings: &RunSettings,
    res: &Resources<'_>,
) -> GeneratedOutput {
    let start = Instant::now();
    let prepared = match prepare_prompt(&sample.question, &settings.spec, res) {
        Ok(p) => p,
        Err(e) => {
            return GeneratedOutput {
                prompt_hash: None,
                retrieved: Vec::new(),
                output: Err(e.to_string()),
                generation: Duration::ZERO,
                prompt_retrieval: start.elapsed(),
            }
        }
    };
    let prompt_retrieval = start.elapsed();
    let start = Instant::now();
    let output = res
        .provider
        .generate(&prepared.prompt, &settings.params)
        .map_err(|e| e.to_string());
    GeneratedOutput {
        prompt_hash: Some(prompt_hash(&prepared.prompt)),
        retrieved: prepared.retrieved.iter().map(|r| r.uri).collect(),
        output,
        generation: start.elapsed(),
        prompt_retrieval,
    }
}

/// Query text from a direct-generation answer: a fenced block if present,
/// otherwise the whole trimmed output.
pub fn extract_query(output: &str) -> &str {
    if let Some(open) = output.find("```") {
        let after = &output[open + 3..];
        let body_start = after.find('\n').map_or(0, |i| i + 1);
        let body = &after[body_start..];
        let end = body.find("```").unwrap_or(body.len());
        return body[..end].trim();
    }
    output.trim()
}

/// Result of interpreting and scoring one generated output.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub record: QueryRecord,
    /// Present in intermediate-query mode once the output parsed.
    pub grounding: Option<GroundingOutcome>,
    /// Time spent in placeholder lookups.
    pub retrieval: Duration,
    /// Time from model output to final query (parsing and grounding),
    /// excluding scoring.
    pub interpret: Duration,
}

/// Interprets and scores a generated output.
pub fn evaluate_output(
    sample: &DatasetSample,
    generated: &GeneratedOutput,
    mode: PromptMode,
    options: RetrieverOptions,
    res: &Resources<'_>,
) -> Evaluated {
    let started = Instant::now();
    let mut record = QueryRecord {
        id: sample.id.clone(),
        question: sample.question.clone(),
        gold_sparql: sample.gold_sparql.clone(),
        prompt_hash: generated.prompt_hash.clone(),
        retrieved: generated.retrieved.clone(),
        raw_output: generated.output.as_ref().ok().cloned(),
        predicted_sparql: None,
        outcome: RecordOutcome::Query,
        resolutions: BTreeMap::new(),
        judgment: judge(
            Prediction::Malformed { raw: "" },
            &sample.gold_sparql,
            res.entity_mem,
            res.relation_mem,
        ),
    };
    let raw = match &generated.output {
        Ok(raw) => raw.as_str(),
        Err(error) => {
            record.outcome = RecordOutcome::GenerationFailed {
                error: error.clone(),
            };
            return Evaluated {
                record,
                grounding: None,
                retrieval: Duration::ZERO,
                interpret: started.elapsed(),
            };
        }
    };

    let mut grounding = None;
    let mut elapsed = Duration::ZERO;
    let prediction = match mode {
        PromptMode::Direct | PromptMode::Rag => {
            let q = extract_query(raw);
            if q.is_empty() {
                record.outcome = RecordOutcome::Malformed {
                    reason: "empty output".into(),
                };
                Prediction::Malformed { raw }
            } else {
                record.predicted_sparql = Some(q.to_string());
                Prediction::Query(q)
            }
        }
        PromptMode::Pgmr => match parse_pgmr(raw) {
            Err(e) => {
                record.outcome = RecordOutcome::Malformed {
                    reason: e.to_string(),
                };
                grounding = Some(GroundingOutcome::malformed(e.to_string()));
                Prediction::Malformed { raw }
            }
            Ok(parsed) => {
                let start = Instant::now();
                let result = ground_query(
                    &parsed,
                    res.entity_mem,
                    res.relation_mem,
                    res.embedder,
                    options,
                );
                elapsed = start.elapsed();
                match result {
                    Err(e) => {
                        record.outcome = RecordOutcome::RetrievalFailed {
                            error: e.to_string(),
                        };
                        return Evaluated {
                            record,
                            grounding: None,
                            retrieval: elapsed,
                            interpret: started.elapsed(),
                        };
                    }
                    Ok(outcome) => {
                        record.resolutions = outcome.resolutions.clone();
                        match &outcome.status {
                            GroundingStatus::Grounded { sparql } => {
                                record.predicted_sparql = Some(sparql.clone());
                            }
                            GroundingStatus::Refusal { placeholders } => {
                                record.outcome = RecordOutcome::Refused {
                                    placeholders: placeholders.clone(),
                                };
                            }
                            GroundingStatus::Malformed { reason } => {
                                record.outcome = RecordOutcome::Malformed {
                                    reason: reason.clone(),
                                };
                            }
                        }
                        grounding = Some(outcome);
                        match &record.outcome {
                            RecordOutcome::Query => Prediction::Query(
                                record.predicted_sparql.as_deref().expect("grounded"),
                            ),
                            RecordOutcome::Refused { .. } => Prediction::Refused { raw },
                            _ => Prediction::Malformed { raw },
                        }
                    }
                }
            }
        },
    };
    let interpret = started.elapsed();
    let mut judgment = judge(prediction, &sample.gold_sparql, res.entity_mem, res.relation_mem);
    if let Some(endpoint) = res.endpoint {
        judgment.answer = Some(
            match answer_f1(record.predicted_sparql.as_deref(), &sample.gold_sparql, endpoint) {
                Ok(score) => score,
                Err(e) => {
                    log::warn!("{}: endpoint unavailable, sample excluded: {e}", sample.id);
                    AnswerScore::Excluded {
                        reason: e.to_string(),
                    }
                }
            },
        );
    }
    record.judgment = judgment;
    Evaluated {
        record,
        grounding,
        retrieval: elapsed,
        interpret,
    }
}

pub(crate) fn worker_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
}

/// Generates outputs for every sample, in sample order.
pub fn generate_outputs(
    samples: &[DatasetSample],
    settings: &RunSettings,
    res: &Resources<'_>,
) -> Vec<GeneratedOutput> {
    worker_pool(settings.workers)
        .install(|| samples.par_iter().map(|s| generate_one(s, settings, res)).collect())
}

/// Runs the configured pipeline over `samples` and scores every question.
pub fn run_pipeline(
    samples: &[DatasetSample],
    settings: &RunSettings,
    res: &Resources<'_>,
) -> RunReport {
    let results: Vec<(QueryRecord, SampleTiming)> = worker_pool(settings.workers).install(|| {
        samples
            .par_iter()
            .map(|sample| {
                let start = Instant::now();
                let generated = generate_one(sample, settings, res);
                let generated_in = start.elapsed();
                let e = evaluate_output(sample, &generated, settings.mode(), settings.retriever, res);
                let timing = SampleTiming {
                    id: sample.id.clone(),
                    generation_s: generated.generation.as_secs_f64(),
                    retrieval_s: e.retrieval.as_secs_f64(),
                    prompt_retrieval_s: generated.prompt_retrieval.as_secs_f64(),
                    total_s: (generated_in + e.interpret).as_secs_f64(),
                    lookups: e.record.lookups(),
                };
                (e.record, timing)
            })
            .collect()
    });
    let (records, timings): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    summarize(settings, records, timings)
}

pub fn summarize(
    settings: &RunSettings,
    records: Vec<QueryRecord>,
    timings: Vec<SampleTiming>,
) -> RunReport {
    let eval = EvalReport::from_judgments(records.iter().map(|r| &r.judgment));
    let count = |f: fn(&RecordOutcome) -> bool| records.iter().filter(|r| f(&r.outcome)).count();
    let summary = RunSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        mode: settings.mode(),
        threshold: settings.retriever.threshold,
        k: settings.spec.k,
        shots: settings.spec.shots.len(),
        eval,
        generation_failures: count(|o| matches!(o, RecordOutcome::GenerationFailed { .. })),
        retrieval_failures: count(|o| matches!(o, RecordOutcome::RetrievalFailed { .. })),
        timing: TimingSummary::from_timings(&timings),
    };
    RunReport {
        summary,
        records,
        timings,
    }
}
