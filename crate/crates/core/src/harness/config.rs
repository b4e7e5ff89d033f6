//! Declarative experiment configuration (TOML) with environment overrides
//! for secrets and service locations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::DatasetFormat;
use super::experiments::default_thresholds;
use crate::generation::{ChatConfig, PromptMode, DEFAULT_RAG_K, ENV_API_KEY};
use crate::metrics::EndpointConfig;
use crate::retrieval::{EncoderConfig, DEFAULT_DIMENSION, DEFAULT_THRESHOLD};

pub const ENV_ENCODER_TOKEN: &str = "PGMR_ENCODER_TOKEN";
pub const ENV_ENCODER_URL: &str = "PGMR_ENCODER_URL";
pub const ENV_ENDPOINT_URL: &str = "PGMR_SPARQL_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required: every random choice derives from it.
    pub seed: u64,
    #[serde(default = "default_pipeline")]
    pub pipeline: PromptMode,
    #[serde(default = "default_threshold")]
    pub threshold: f32,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Share of the entity memory removed before a plain run.
    #[serde(default)]
    pub ablation_fraction: f64,
    #[serde(default = "one")]
    pub memory_factor: usize,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub restrict_ties: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub endpoint: Option<EndpointConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub latency: LatencyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_format")]
    pub format: DatasetFormat,
    /// Entity memory: JSONL metadata or a binary snapshot.
    pub entities: PathBuf,
    pub relations: PathBuf,
    /// JSONL exemplars `{question, target}` for few-shot prompts.
    #[serde(default)]
    pub exemplars: Option<PathBuf>,
    #[serde(default)]
    pub shots: usize,
    /// Seed for reordering exemplars; dataset order when absent.
    #[serde(default)]
    pub exemplar_shuffle_seed: Option<u64>,
    /// Metadata dump used as distractor pool; synthetic records otherwise.
    #[serde(default)]
    pub distractors: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    /// Replay fixture (JSONL). Required unless `live` is set.
    #[serde(default)]
    pub fixtures: Option<PathBuf>,
    /// Call the chat service instead of replaying.
    #[serde(default)]
    pub live: bool,
    #[serde(default)]
    pub chat: Option<ChatConfig>,
    #[serde(default)]
    pub temperature: f32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Delay added to each replayed answer, standing in for model latency.
    #[serde(default)]
    pub simulated_latency_ms: f64,
    #[serde(default = "one")]
    pub in_flight: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            fixtures: None,
            live: false,
            chat: None,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            simulated_latency_ms: 0.0,
            in_flight: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderConfig {
    /// Offline hashed character-trigram encoder.
    Hashed {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Remote(EncoderConfig),
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hashed {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_ablations")]
    pub ablations: Vec<f64>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ablations: default_ablations(),
            thresholds: default_thresholds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default = "default_factors")]
    pub factors: Vec<usize>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            factors: default_factors(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    #[serde(default = "default_budget_ms")]
    pub budget_ms: f64,
    #[serde(default = "default_bench_size")]
    pub memory_size: usize,
    #[serde(default = "default_probes")]
    pub probes: usize,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            budget_ms: default_budget_ms(),
            memory_size: default_bench_size(),
            probes: default_probes(),
        }
    }
}

fn default_pipeline() -> PromptMode {
    PromptMode::Pgmr
}
fn default_threshold() -> f32 {
    DEFAULT_THRESHOLD
}
fn default_k() -> usize {
    DEFAULT_RAG_K
}
fn one() -> usize {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_format() -> DatasetFormat {
    DatasetFormat::Jsonl
}
fn default_max_tokens() -> u32 {
    512
}
fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}
fn default_ablations() -> Vec<f64> {
    vec![0.3]
}
fn default_factors() -> Vec<usize> {
    (1..=9).collect()
}
fn default_budget_ms() -> f64 {
    5.0
}
fn default_bench_size() -> usize {
    100_000
}
fn default_probes() -> usize {
    200
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads the file, applies environment overrides and validates.
    /// Relative paths are resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: ExperimentConfig = toml::from_str(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        config.apply_env();
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.data.dataset);
        fix(&mut self.data.entities);
        fix(&mut self.data.relations);
        for p in [&mut self.data.exemplars, &mut self.data.distractors, &mut self.generation.fixtures]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Secrets and service URLs from the environment take precedence.
    pub fn apply_env(&mut self) {
        if self.generation.live || std::env::var_os(ENV_API_KEY).is_some() {
            self.generation.chat = match self.generation.chat.take() {
                Some(c) => Some(c.with_env()),
                None => ChatConfig::from_env(),
            };
        }
        if let EmbedderConfig::Remote(enc) = &mut self.embedder {
            if let Ok(t) = std::env::var(ENV_ENCODER_TOKEN) {
                enc.auth_token = Some(t);
            }
            if let Ok(u) = std::env::var(ENV_ENCODER_URL) {
                enc.base_url = u;
            }
        }
        if let Ok(url) = std::env::var(ENV_ENDPOINT_URL) {
            match &mut self.endpoint {
                Some(e) => e.url = url,
                None => {
                    self.endpoint = Some(EndpointConfig {
                        url,
                        timeout_secs: 60,
                        min_interval_ms: 0,
                        retry: Default::default(),
                    })
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(0.0..=1.0).contains(&self.ablation_fraction) {
            return bad(format!("ablation_fraction {} outside [0, 1]", self.ablation_fraction));
        }
        if !(1..=9).contains(&self.memory_factor) {
            return bad(format!("memory_factor {} outside 1..=9", self.memory_factor));
        }
        if self.pipeline == PromptMode::Rag && self.k == 0 {
            return bad("k must be at least 1 for the rag pipeline".into());
        }
        if self.workers == 0 || self.generation.in_flight == 0 {
            return bad("workers and in_flight must be at least 1".into());
        }
        if let Some(f) = self.scaling.factors.iter().find(|f| !(1..=9).contains(*f)) {
            return bad(format!("scaling factor {f} outside 1..=9"));
        }
        if let Some(a) = self.sweep.ablations.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return bad(format!("sweep ablation {a} outside (0, 1]"));
        }
        if self.generation.live && self.generation.chat.is_none() {
            return bad("live generation needs a [generation.chat] section or PGMR_LLM_* variables".into());
        }
        Ok(())
    }
}
