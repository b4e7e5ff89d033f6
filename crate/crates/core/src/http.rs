//! Blocking JSON-over-HTTP helper shared by the encoder, LLM and SPARQL
//! endpoint clients.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HttpFailure {
    #[error("transport: {0}")]
    Transport(String),
    #[error("timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("bad response body: {0}")]
    Decode(String),
}

impl HttpFailure {
    pub fn is_transient(&self) -> bool {
        match self {
            HttpFailure::Transport(_) | HttpFailure::Timeout => true,
            HttpFailure::Status { status, .. } => *status == 429 || *status >= 500,
            HttpFailure::Decode(_) => false,
        }
    }
}

/// Exponential backoff: `base_delay · 2^attempt`, up to `max_retries`
/// retries after the first attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 250,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << attempt.min(16)))
    }

    /// Runs `op` until it succeeds, fails permanently, or retries run out.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, HttpFailure>) -> Result<T, HttpFailure> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() && attempt < self.max_retries => {
                    log::warn!("transient HTTP failure (attempt {}): {e}", attempt + 1);
                    thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

pub fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn map_error(e: ureq::Error) -> HttpFailure {
    match e {
        ureq::Error::Timeout(_) => HttpFailure::Timeout,
        other => HttpFailure::Transport(other.to_string()),
    }
}

fn finish<T: DeserializeOwned>(
    response: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
) -> Result<T, HttpFailure> {
    let mut response = response.map_err(map_error)?;
    let status = response.status().as_u16();
    if !(200..300).contains(&status) {
        let body = response.body_mut().read_to_string().unwrap_or_default();
        return Err(HttpFailure::Status { status, body });
    }
    response
        .body_mut()
        .read_json::<T>()
        .map_err(|e| HttpFailure::Decode(e.to_string()))
}

pub fn post_json<B: Serialize, T: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    bearer: Option<&str>,
    body: &B,
) -> Result<T, HttpFailure> {
    let mut request = agent.post(url).header("Accept", "application/json");
    if let Some(token) = bearer {
        request = request.header("Authorization", format!("Bearer {token}"));
    }
    finish(request.send_json(body))
}

/// Form-encoded POST, as used by the SPARQL protocol.
pub fn post_form<T: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    accept: &str,
    fields: &[(&str, &str)],
) -> Result<T, HttpFailure> {
    let request = agent
        .post(url)
        .header("Accept", accept)
        .header("User-Agent", concat!("pgmr/", env!("CARGO_PKG_VERSION")));
    finish(request.send_form(fields.iter().copied()))
}
