//! Turns an experiment config into loaded memories, providers and samples.

use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use pgmr::generation::{
    ChatClient, Exemplar, GenerationParams, GenerationProvider, PromptSpec, ReplayProvider,
};
use pgmr::harness::pipeline::Resources;
use pgmr::harness::{load_dataset, DatasetSample, EmbedderConfig, ExperimentConfig, RunSettings, Split};
use pgmr::kg::{load_distractors, open_memory, synthetic_distractors, KgRecord, Memory, UriKind};
use pgmr::metrics::HttpSparqlEndpoint;
use pgmr::retrieval::{EmbeddingProvider, EncoderClient, HashedTrigramEmbedder, RetrieverOptions};

pub fn embedder(config: &EmbedderConfig) -> Box<dyn EmbeddingProvider> {
    match config {
        EmbedderConfig::Hashed { dimension } => Box::new(HashedTrigramEmbedder::new(*dimension)),
        EmbedderConfig::Remote(enc) => Box::new(EncoderClient::new(enc.clone())),
    }
}

/// Opens a memory and embeds it unless it already carries vectors of the
/// embedder's dimension.
pub fn memory(path: &Path, kind: UriKind, embedder: &dyn EmbeddingProvider) -> Result<Memory> {
    let m = open_memory(path, kind).with_context(|| format!("loading {}", path.display()))?;
    if m.is_empty() || (m.is_embedded() && m.dimension() == Some(embedder.dimension())) {
        return Ok(m);
    }
    log::info!("embedding {} {kind} records from {}", m.len(), path.display());
    m.embed(embedder)
        .with_context(|| format!("embedding {}", path.display()))
}

fn read_exemplars(path: &Path) -> Result<Vec<Exemplar>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

pub fn settings(config: &ExperimentConfig) -> Result<RunSettings> {
    let pool = match &config.data.exemplars {
        Some(p) => read_exemplars(p)?,
        None => Vec::new(),
    };
    if pool.len() < config.data.shots {
        bail!("{} shots requested but only {} exemplars available", config.data.shots, pool.len());
    }
    let mut spec = PromptSpec::new(config.pipeline, pool, config.k)?;
    if let Some(seed) = config.data.exemplar_shuffle_seed {
        spec = spec.shuffled(seed);
    }
    spec.shots.truncate(config.data.shots);
    Ok(RunSettings {
        spec,
        params: GenerationParams {
            temperature: config.generation.temperature,
            max_tokens: config.generation.max_tokens,
        },
        retriever: RetrieverOptions {
            threshold: config.threshold,
            restrict_ties: config.restrict_ties,
        },
        workers: config.workers,
    })
}

pub fn provider(config: &ExperimentConfig) -> Result<Box<dyn GenerationProvider>> {
    let g = &config.generation;
    if g.live {
        let chat = g.chat.clone().context("live generation without chat settings")?;
        return Ok(Box::new(ChatClient::new(chat)));
    }
    let path = g
        .fixtures
        .as_ref()
        .context("no replay fixture configured; set generation.fixtures or generation.live")?;
    let replay = ReplayProvider::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(Box::new(replay.with_latency(Duration::from_secs_f64(
        g.simulated_latency_ms.max(0.0) / 1e3,
    ))))
}

/// Everything a run needs, owned.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub entities: Memory,
    pub relations: Memory,
    pub embedder: Box<dyn EmbeddingProvider>,
    pub provider: Box<dyn GenerationProvider>,
    pub endpoint: Option<HttpSparqlEndpoint>,
    pub samples: Vec<DatasetSample>,
    pub settings: RunSettings,
}

impl Loaded {
    pub fn new(config: ExperimentConfig, provider: Box<dyn GenerationProvider>) -> Result<Self> {
        let embedder = embedder(&config.embedder);
        let entities = memory(&config.data.entities, UriKind::Entity, embedder.as_ref())?;
        let relations = memory(&config.data.relations, UriKind::Relation, embedder.as_ref())?;
        let dataset = load_dataset(&config.data.dataset, config.data.format, Split::Test)
            .with_context(|| format!("loading {}", config.data.dataset.display()))?;
        for q in &dataset.quarantined {
            log::warn!("quarantined {}: {}", q.id, q.reason);
        }
        let endpoint = config.endpoint.clone().map(HttpSparqlEndpoint::new);
        let settings = settings(&config)?;
        Ok(Loaded {
            config,
            entities,
            relations,
            embedder,
            provider,
            endpoint,
            samples: dataset.samples,
            settings,
        })
    }

    pub fn resources(&self) -> Resources<'_> {
        Resources {
            entity_mem: &self.entities,
            relation_mem: &self.relations,
            embedder: self.embedder.as_ref(),
            provider: self.provider.as_ref(),
            endpoint: self
                .endpoint
                .as_ref()
                .map(|e| e as &dyn pgmr::metrics::SparqlEndpoint),
        }
    }

    /// Distractor pool for memory scaling, from a dump or generated.
    pub fn distractors(&self, needed: usize) -> Result<Vec<KgRecord>> {
        match &self.config.data.distractors {
            Some(p) => Ok(load_distractors(p, UriKind::Entity, &self.entities)?),
            None => Ok(synthetic_distractors(
                UriKind::Entity,
                needed,
                &self.entities,
                self.config.seed,
            )),
        }
    }
}
