#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::OnceLock;

use pgmr::generation::{GenerationParams, PromptMode, PromptSpec, ReplayProvider};
use pgmr::harness::{oracle_fixture, DatasetSample, Resources, RunSettings};
use pgmr::kg::{Memory, UriKind, UriRef};
use pgmr::retrieval::{HashedTrigramEmbedder, RetrieverOptions, DEFAULT_DIMENSION};
use pgmr::synth::corpus::{generate_corpus, CorpusOptions};
use regex::Regex;

pub struct World {
    pub entities: Memory,
    pub relations: Memory,
    pub samples: Vec<DatasetSample>,
    pub embedder: HashedTrigramEmbedder,
}

impl World {
    pub fn new(samples: usize, duplicate_labels: f64, seed: u64) -> Self {
        let mut opts = CorpusOptions::new(samples, seed);
        opts.duplicate_labels = duplicate_labels;
        let corpus = generate_corpus(&opts);
        let embedder = HashedTrigramEmbedder::new(DEFAULT_DIMENSION);
        World {
            entities: corpus.entities.embed(&embedder).unwrap(),
            relations: corpus.relations.embed(&embedder).unwrap(),
            samples: corpus.samples,
            embedder,
        }
    }

    pub fn resources<'a>(
        &'a self,
        provider: &'a ReplayProvider,
        entities: Option<&'a Memory>,
    ) -> Resources<'a> {
        Resources {
            entity_mem: entities.unwrap_or(&self.entities),
            relation_mem: &self.relations,
            embedder: &self.embedder,
            provider,
            endpoint: None,
        }
    }

    /// Replay provider answering every sample with its (optionally noisy)
    /// intermediate query.
    pub fn oracle_provider(&self, spec: &PromptSpec, noise: f64, seed: u64) -> ReplayProvider {
        let placeholder = ReplayProvider::default();
        let res = self.resources(&placeholder, None);
        ReplayProvider::from_entries(oracle_fixture(&self.samples, spec, &res, noise, seed).unwrap())
    }
}

pub fn pgmr_settings(threshold: f32) -> RunSettings {
    RunSettings {
        spec: PromptSpec::new(PromptMode::Pgmr, Vec::new(), 0).unwrap(),
        params: GenerationParams::default(),
        retriever: RetrieverOptions::with_threshold(threshold),
        workers: 1,
    }
}

fn uri_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(wd:q|(?:wdt|p|ps|pq):p)([0-9]+)\b").unwrap())
}

/// URIs mentioned in a query, found by pattern rather than by the parser.
pub fn scan_uris(query: &str) -> BTreeSet<UriRef> {
    uri_re()
        .captures_iter(query)
        .map(|c| {
            let id: u64 = c[2].parse().unwrap();
            if c[1].eq_ignore_ascii_case("wd:q") {
                UriRef::new(UriKind::Entity, id)
            } else {
                UriRef::new(UriKind::Relation, id)
            }
        })
        .collect()
}
