//! Replay fixtures whose outputs are derived from the gold queries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::DatasetSample;
use super::pipeline::{prepare_prompt, PrepareError, Resources};
use crate::generation::{FixtureEntry, PromptMode, PromptSpec};
use crate::synth::corpus::perturb_label;
use crate::transform::{render_pgmr, sparql_to_pgmr, TransformError};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("sample {id}: {source}")]
    Transform {
        id: String,
        #[source]
        source: TransformError,
    },
    #[error("sample {id}: {source}")]
    Prompt {
        id: String,
        #[source]
        source: PrepareError,
    },
}

/// Output a perfect model would give: the gold query itself, or its
/// rendered intermediate form.
pub fn oracle_output(
    sample: &DatasetSample,
    mode: PromptMode,
    res: &Resources<'_>,
) -> Result<String, TransformError> {
    match mode {
        PromptMode::Direct | PromptMode::Rag => Ok(sample.gold_sparql.clone()),
        PromptMode::Pgmr => {
            let t = sparql_to_pgmr(&sample.gold_sparql, res.entity_mem, res.relation_mem)?;
            Ok(render_pgmr(&t.query))
        }
    }
}

/// Fixture entries answering each sample's prompt with its oracle output.
///
/// With `label_noise > 0`, that share of intermediate-query bindings gets a
/// one-letter label typo so they miss the exact-label stage.
pub fn oracle_fixture(
    samples: &[DatasetSample],
    spec: &PromptSpec,
    res: &Resources<'_>,
    label_noise: f64,
    seed: u64,
) -> Result<Vec<FixtureEntry>, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples.len());
    for sample in samples {
        let prepared =
            prepare_prompt(&sample.question, spec, res).map_err(|source| OracleError::Prompt {
                id: sample.id.clone(),
                source,
            })?;
        let output = if spec.mode == PromptMode::Pgmr && label_noise > 0.0 {
            let mut t = sparql_to_pgmr(&sample.gold_sparql, res.entity_mem, res.relation_mem)
                .map_err(|source| OracleError::Transform {
                    id: sample.id.clone(),
                    source,
                })?;
            for b in &mut t.query.bindings {
                if rng.random_bool(label_noise.min(1.0)) {
                    b.label = perturb_label(&b.label, &mut rng);
                }
            }
            render_pgmr(&t.query)
        } else {
            oracle_output(sample, spec.mode, res).map_err(|source| OracleError::Transform {
                id: sample.id.clone(),
                source,
            })?
        };
        out.push(FixtureEntry::success(&prepared.prompt, &output));
    }
    Ok(out)
}
