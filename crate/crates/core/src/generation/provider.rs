use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f32,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.0,
            max_tokens: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerationError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("LLM service returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected LLM response: {0}")]
    Protocol(String),
    #[error("no fixture entry for prompt hash {hash}")]
    MissingFixture { hash: String },
    /// A failure captured while recording, replayed as-is.
    #[error("recorded failure: {0}")]
    Recorded(String),
    #[error("prompt: {0}")]
    Prompt(#[from] super::prompt::PromptError),
}

impl GenerationError {
    pub fn is_retriable(&self) -> bool {
        match self {
            GenerationError::Transport(_) => true,
            GenerationError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait GenerationProvider: Send + Sync {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, GenerationError>;
}

impl<T: GenerationProvider + ?Sized> GenerationProvider for &T {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, GenerationError> {
        (**self).generate(prompt, params)
    }
}

impl<T: GenerationProvider + ?Sized> GenerationProvider for Box<T> {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, GenerationError> {
        (**self).generate(prompt, params)
    }
}

impl<T: GenerationProvider + ?Sized> GenerationProvider for std::sync::Arc<T> {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, GenerationError> {
        (**self).generate(prompt, params)
    }
}

/// Lowercase hex SHA-256 of the prompt bytes.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// One fixture line. Exactly one of `output` and `error` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub prompt_hash: String,
    pub prompt: String,
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FixtureEntry {
    pub fn success(prompt: &str, output: &str) -> Self {
        FixtureEntry {
            prompt_hash: prompt_hash(prompt),
            prompt: prompt.to_string(),
            output: Some(output.to_string()),
            error: None,
        }
    }

    pub fn failure(prompt: &str, error: &GenerationError) -> Self {
        FixtureEntry {
            prompt_hash: prompt_hash(prompt),
            prompt: prompt.to_string(),
            output: None,
            error: Some(error.to_string()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("fixture line {line}: {message}")]
    Malformed { line: usize, message: String },
}

pub fn read_fixture(path: &Path) -> Result<Vec<FixtureEntry>, FixtureError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: FixtureEntry =
            serde_json::from_str(&line).map_err(|e| FixtureError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
        if entry.prompt_hash != prompt_hash(&entry.prompt) {
            return Err(FixtureError::Malformed {
                line: i + 1,
                message: "prompt_hash does not match prompt".into(),
            });
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn write_fixture(path: &Path, entries: &[FixtureEntry]) -> Result<(), FixtureError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut out = io::BufWriter::new(File::create(path)?);
    for entry in entries {
        serde_json::to_writer(&mut out, entry).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Serves recorded outputs keyed by prompt hash. Read-only after
/// construction, so concurrent calls are safe.
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    entries: HashMap<String, FixtureEntry>,
    latency: Option<Duration>,
}

impl ReplayProvider {
    pub fn from_entries(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        let mut map = HashMap::new();
        for e in entries {
            // later lines win, matching append-style recording
            map.insert(e.prompt_hash.clone(), e);
        }
        ReplayProvider {
            entries: map,
            latency: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        Ok(Self::from_entries(read_fixture(path)?))
    }

    /// Sleeps this long on each call, standing in for model latency.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency).filter(|d| !d.is_zero());
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, prompt: &str) -> Option<&FixtureEntry> {
        self.entries.get(&prompt_hash(prompt))
    }
}

impl GenerationProvider for ReplayProvider {
    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<String, GenerationError> {
        if let Some(d) = self.latency {
            thread::sleep(d);
        }
        let hash = prompt_hash(prompt);
        let entry = self
            .entries
            .get(&hash)
            .ok_or(GenerationError::MissingFixture { hash })?;
        match (&entry.output, &entry.error) {
            (Some(out), _) => Ok(out.clone()),
            (None, Some(err)) => Err(GenerationError::Recorded(err.clone())),
            (None, None) => Err(GenerationError::Recorded("empty fixture entry".into())),
        }
    }
}
