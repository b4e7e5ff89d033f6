//! Client for an external text-encoder service.
//!
//! Request: `POST {base_url}` with `{"model": ..., "input": ["text", ...]}`.
//! Response: `{"data": [{"embedding": [f32, ...]}, ...]}` in input order
//! (the OpenAI-style embeddings shape most serving stacks expose).
//! Returned vectors are L2-normalized client-side.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::embedder::{EmbedError, EmbeddingProvider};
use super::index::l2_normalize;
use crate::http::{self, HttpFailure, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub base_url: String,
    #[serde(default)]
    pub model: Option<String>,
    /// Usually supplied through the environment rather than the config file.
    #[serde(default, skip_serializing)]
    pub auth_token: Option<String>,
    pub dimension: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_batch_size() -> usize {
    32
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    embedding: Vec<f32>,
}

pub struct EncoderClient {
    config: EncoderConfig,
    agent: ureq::Agent,
}

impl EncoderClient {
    pub fn new(config: EncoderConfig) -> Self {
        let agent = http::agent(Duration::from_secs(config.timeout_secs));
        EncoderClient { config, agent }
    }

    fn request(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let body = EmbedRequest {
            model: self.config.model.as_deref(),
            input: texts,
        };
        let response: EmbedResponse = self
            .config
            .retry
            .run(|| {
                http::post_json(
                    &self.agent,
                    &self.config.base_url,
                    self.config.auth_token.as_deref(),
                    &body,
                )
            })
            .map_err(|e| match e {
                HttpFailure::Status { status, body } => EmbedError::Http { status, body },
                HttpFailure::Decode(m) => EmbedError::Protocol(m),
                other => EmbedError::Transport(other.to_string()),
            })?;
        if response.data.len() != texts.len() {
            return Err(EmbedError::Protocol(format!(
                "{} vectors for {} inputs",
                response.data.len(),
                texts.len()
            )));
        }
        response
            .data
            .into_iter()
            .map(|item| {
                let mut v = item.embedding;
                if v.len() != self.config.dimension {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.config.dimension,
                        got: v.len(),
                    });
                }
                l2_normalize(&mut v);
                Ok(v)
            })
            .collect()
    }
}

impl EmbeddingProvider for EncoderClient {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut out = self.request(&[text.to_string()])?;
        Ok(out.pop().expect("length checked"))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size.max(1)) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }
}
