//! Refusal sweep, memory scaling and latency drivers.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::DatasetSample;
use super::pipeline::{
    evaluate_output, generate_outputs, run_pipeline, worker_pool, QueryRecord, Resources,
    RunSettings, RunSummary, SampleTiming, REPORT_SCHEMA_VERSION,
};
use crate::generation::PromptMode;
use crate::kg::{KgError, KgRecord, Memory, UriKind, UriRef};
use crate::metrics::{refusal_accuracy, EvalReport};
use crate::retrieval::{
    retrieve, GroundingOutcome, HashedTrigramEmbedder, RetrieverOptions, DEFAULT_THRESHOLD,
};
use crate::sparql::extract_uris;
use crate::transform::PlaceholderBinding;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error("experiment needs intermediate-query prompts, got {0:?}")]
    WrongMode(PromptMode),
    #[error("{0}")]
    Invalid(String),
}

/// Thresholds 0.50, 0.55, ..., 0.95 preceded by 0 (refusal disabled).
pub fn default_thresholds() -> Vec<f32> {
    let mut t = vec![0.0];
    t.extend((10..=19).map(|i| i as f32 * 0.05));
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefusalRow {
    pub ablation: f64,
    pub threshold: f32,
    pub answerable: usize,
    pub unanswerable: usize,
    /// Percent of unanswerable questions refused.
    pub refusal_accuracy: Option<f64>,
    /// SQM in percent on answerable questions.
    pub answerable_sqm: Option<f64>,
    /// Answerable questions that were refused anyway.
    pub answerable_refused: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefusalReport {
    pub schema_version: u32,
    pub default_threshold: f32,
    pub seed: u64,
    pub samples: usize,
    pub generation_failures: usize,
    pub rows: Vec<RefusalRow>,
}

/// Gold entity URIs of every sample; a sample is answerable when none of
/// them was removed.
pub fn answerability(samples: &[DatasetSample], removed: &BTreeSet<UriRef>) -> Vec<bool> {
    samples
        .iter()
        .map(|s| {
            extract_uris(&s.gold_sparql)
                .entities
                .iter()
                .all(|u| !removed.contains(u))
        })
        .collect()
}

/// For each ablation fraction, removes that share of the entity memory and
/// grounds the cached model outputs at every threshold.
pub fn run_refusal_experiment(
    samples: &[DatasetSample],
    settings: &RunSettings,
    res: &Resources<'_>,
    ablations: &[f64],
    thresholds: &[f32],
    seed: u64,
) -> Result<RefusalReport, ExperimentError> {
    if settings.mode() != PromptMode::Pgmr {
        return Err(ExperimentError::WrongMode(settings.mode()));
    }
    if let Some(a) = ablations.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(ExperimentError::Invalid(format!(
            "ablation fraction {a} outside (0, 1]"
        )));
    }
    let generated = generate_outputs(samples, settings, res);
    let generation_failures = generated.iter().filter(|g| g.output.is_err()).count();
    let pool = worker_pool(settings.workers);
    let mut rows = Vec::new();
    for &ablation in ablations {
        let (ablated, removed) = res.entity_mem.ablate(ablation, seed)?;
        let answerable = answerability(samples, &removed);
        let ablated_res = Resources {
            entity_mem: &ablated,
            ..*res
        };
        for &threshold in thresholds {
            let options = RetrieverOptions {
                threshold,
                ..settings.retriever
            };
            let evaluated: Vec<(QueryRecord, GroundingOutcome)> = pool.install(|| {
                samples
                    .par_iter()
                    .zip(&generated)
                    .map(|(s, g)| {
                        let e = evaluate_output(s, g, PromptMode::Pgmr, options, &ablated_res);
                        let outcome = e.grounding.unwrap_or_else(|| {
                            GroundingOutcome::malformed(format!("{:?}", e.record.outcome))
                        });
                        (e.record, outcome)
                    })
                    .collect()
            });
            let split = refusal_accuracy(
                evaluated
                    .iter()
                    .zip(&answerable)
                    .map(|((_, o), a)| (o, *a)),
            );
            let answerable_records: Vec<&QueryRecord> =
                split.answerable.iter().map(|&i| &evaluated[i].0).collect();
            let answerable_sqm = (!answerable_records.is_empty()).then(|| {
                EvalReport::from_judgments(answerable_records.iter().map(|r| &r.judgment)).sqm
            });
            rows.push(RefusalRow {
                ablation,
                threshold,
                answerable: split.answerable.len(),
                unanswerable: split.unanswerable,
                refusal_accuracy: split.refusal_accuracy,
                answerable_sqm,
                answerable_refused: answerable_records
                    .iter()
                    .filter(|r| r.judgment.refused)
                    .count(),
            });
        }
    }
    Ok(RefusalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        default_threshold: DEFAULT_THRESHOLD,
        seed,
        samples: samples.len(),
        generation_failures,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub factor: usize,
    pub entity_memory_size: usize,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub schema_version: u32,
    pub threshold: f32,
    pub baseline: EvalReport,
    /// Factor-1 records equal the baseline run record for record.
    pub factor_one_matches_baseline: bool,
    pub rows: Vec<ScalingRow>,
}

impl ScalingReport {
    /// Largest SQM drop, in percentage points, relative to the baseline.
    pub fn max_sqm_drop(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| self.baseline.sqm - r.eval.sqm)
            .fold(0.0, f64::max)
    }
}

/// Grounds the same model outputs against entity memories inflated with
/// distractors to `factor ×` their size. `pool` must hold at least
/// `(max factor − 1) × |memory|` records; they are embedded here.
pub fn run_memory_scaling(
    samples: &[DatasetSample],
    settings: &RunSettings,
    res: &Resources<'_>,
    factors: &[usize],
    pool: &[KgRecord],
) -> Result<ScalingReport, ExperimentError> {
    if settings.mode() != PromptMode::Pgmr {
        return Err(ExperimentError::WrongMode(settings.mode()));
    }
    if let Some(f) = factors.iter().find(|f| !(1..=9).contains(*f)) {
        return Err(ExperimentError::Invalid(format!("memory factor {f} outside 1..=9")));
    }
    let max_factor = factors.iter().copied().max().unwrap_or(1);
    let needed = res.entity_mem.len() * (max_factor - 1);
    if pool.len() < needed {
        return Err(KgError::InsufficientDistractors {
            needed,
            available: pool.len(),
        }
        .into());
    }
    let pool = Memory::from_records(UriKind::Entity, pool[..needed].to_vec())
        .map_err(ExperimentError::from)
        .and_then(|m| {
            if needed == 0 {
                Ok(m)
            } else {
                m.embed(res.embedder).map_err(Into::into)
            }
        })?;

    let generated = generate_outputs(samples, settings, res);
    let workers = worker_pool(settings.workers);
    let evaluate = |r: &Resources<'_>| -> Vec<QueryRecord> {
        workers.install(|| {
            samples
                .par_iter()
                .zip(&generated)
                .map(|(s, g)| evaluate_output(s, g, PromptMode::Pgmr, settings.retriever, r).record)
                .collect()
        })
    };
    let baseline_records = evaluate(res);
    let baseline = EvalReport::from_judgments(baseline_records.iter().map(|r| &r.judgment));

    let mut rows = Vec::new();
    let mut factor_one_matches_baseline = true;
    for &factor in factors {
        let inflated = res
            .entity_mem
            .augment_with_distractors(pool.records(), factor)?;
        let r = Resources {
            entity_mem: &inflated,
            ..*res
        };
        let records = evaluate(&r);
        if factor == 1 {
            factor_one_matches_baseline = records == baseline_records;
        }
        rows.push(ScalingRow {
            factor,
            entity_memory_size: inflated.len(),
            eval: EvalReport::from_judgments(records.iter().map(|r| &r.judgment)),
        });
    }
    Ok(ScalingReport {
        schema_version: REPORT_SCHEMA_VERSION,
        threshold: settings.retriever.threshold,
        baseline,
        factor_one_matches_baseline,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupBenchmark {
    pub memory_size: usize,
    pub dimension: usize,
    pub probes: usize,
    pub median_s: f64,
    pub p95_s: f64,
    pub budget_s: f64,
    pub within_budget: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub schema_version: u32,
    pub run: RunSummary,
    /// Histogram of placeholder lookups per question: `k_histogram[k]`.
    pub k_histogram: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookup_benchmark: Option<LookupBenchmark>,
}

/// Runs the pipeline on one worker so per-question timings are not
/// distorted by contention, then summarizes the additive decomposition.
pub fn measure_latency(
    samples: &[DatasetSample],
    settings: &RunSettings,
    res: &Resources<'_>,
) -> (LatencyReport, Vec<SampleTiming>) {
    let sequential = RunSettings {
        workers: 1,
        ..settings.clone()
    };
    let report = run_pipeline(samples, &sequential, res);
    let max_k = report.timings.iter().map(|t| t.lookups).max().unwrap_or(0);
    let mut k_histogram = vec![0; max_k + 1];
    for t in &report.timings {
        k_histogram[t.lookups] += 1;
    }
    (
        LatencyReport {
            schema_version: REPORT_SCHEMA_VERSION,
            run: report.summary,
            k_histogram,
            lookup_benchmark: None,
        },
        report.timings,
    )
}

/// Median time of one embedding-stage lookup over a synthetic memory of
/// `memory_size` records, using the offline embedder.
pub fn benchmark_lookup(
    memory_size: usize,
    dimension: usize,
    probes: usize,
    budget_s: f64,
    seed: u64,
) -> Result<LookupBenchmark, ExperimentError> {
    let embedder = HashedTrigramEmbedder::new(dimension);
    let records = crate::kg::synthetic_distractors(
        UriKind::Entity,
        memory_size,
        &Memory::empty(UriKind::Entity),
        seed,
    );
    let memory = Memory::from_records(UriKind::Entity, records)?.embed(&embedder)?;
    let probe_bindings: Vec<PlaceholderBinding> = crate::kg::synthetic_distractors(
        UriKind::Entity,
        probes.max(1),
        &memory,
        seed.wrapping_add(1),
    )
    .into_iter()
    .map(|r| PlaceholderBinding::new(UriKind::Entity, 1, r.label(), r.description()))
    .collect();
    let options = RetrieverOptions::with_threshold(0.0);
    // warm-up
    let _ = retrieve(&probe_bindings[0], &memory, &embedder, options);
    let mut times: Vec<f64> = Vec::with_capacity(probe_bindings.len());
    for b in &probe_bindings {
        let start = Instant::now();
        let r = retrieve(b, &memory, &embedder, options).map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        times.push(start.elapsed().as_secs_f64());
        std::hint::black_box(r);
    }
    times.sort_by(f64::total_cmp);
    let median_s = times[times.len() / 2];
    let p95_s = times[((times.len() as f64 * 0.95) as usize).min(times.len() - 1)];
    Ok(LookupBenchmark {
        memory_size,
        dimension,
        probes: times.len(),
        median_s,
        p95_s,
        budget_s,
        within_budget: median_s <= budget_s,
    })
}
