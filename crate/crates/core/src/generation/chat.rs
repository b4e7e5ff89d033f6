//! Client for an OpenAI-style `/chat/completions` endpoint.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::provider::{GenerationError, GenerationParams, GenerationProvider};
use crate::http::{self, HttpFailure, RetryPolicy};

pub const ENV_BASE_URL: &str = "PGMR_LLM_BASE_URL";
pub const ENV_MODEL: &str = "PGMR_LLM_MODEL";
pub const ENV_API_KEY: &str = "PGMR_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatConfig {
    /// e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout_secs() -> u64 {
    120
}

impl ChatConfig {
    /// Fills unset fields from the environment. Environment values win over
    /// file values for the API key only.
    pub fn with_env(mut self) -> Self {
        if self.base_url.is_empty() {
            if let Ok(v) = std::env::var(ENV_BASE_URL) {
                self.base_url = v;
            }
        }
        if self.model.is_empty() {
            if let Ok(v) = std::env::var(ENV_MODEL) {
                self.model = v;
            }
        }
        if let Ok(v) = std::env::var(ENV_API_KEY) {
            self.api_key = Some(v);
        }
        self
    }

    pub fn from_env() -> Option<Self> {
        let base_url = std::env::var(ENV_BASE_URL).ok()?;
        let model = std::env::var(ENV_MODEL).ok()?;
        Some(ChatConfig {
            base_url,
            model,
            api_key: std::env::var(ENV_API_KEY).ok(),
            timeout_secs: default_timeout_secs(),
            retry: RetryPolicy::default(),
        })
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f32,
    max_tokens: u32,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

pub struct ChatClient {
    config: ChatConfig,
    url: String,
    agent: ureq::Agent,
}

impl ChatClient {
    pub fn new(config: ChatConfig) -> Self {
        let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        let agent = http::agent(Duration::from_secs(config.timeout_secs));
        ChatClient { config, url, agent }
    }

    pub fn config(&self) -> &ChatConfig {
        &self.config
    }
}

impl GenerationProvider for ChatClient {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, GenerationError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: [Message {
                role: "user",
                content: prompt,
            }],
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let response: ChatResponse = self
            .config
            .retry
            .run(|| http::post_json(&self.agent, &self.url, self.config.api_key.as_deref(), &body))
            .map_err(|e| match e {
                HttpFailure::Status { status, body } => GenerationError::Http { status, body },
                HttpFailure::Decode(m) => GenerationError::Protocol(m),
                other => GenerationError::Transport(other.to_string()),
            })?;
        response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GenerationError::Protocol("no message content in response".into()))
    }
}
