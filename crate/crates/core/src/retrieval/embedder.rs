//! Text encoders used as memory keys and retrieval queries.

use super::index::l2_normalize;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("encoder transport error: {0}")]
    Transport(String),
    #[error("encoder returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected encoder response: {0}")]
    Protocol(String),
    #[error("encoder returned a {got}-dimensional vector, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0}")]
    Other(String),
}

impl EmbedError {
    /// Whether retrying the same request may succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            EmbedError::Transport(_) => true,
            EmbedError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Encodes text into fixed-length, L2-normalized vectors.
///
/// Implementations must be deterministic and safe to call from several
/// threads at once.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        (**self).embed(text)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        (**self).embed(text)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        (**self).embed(text)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

pub const DEFAULT_DIMENSION: usize = 256;

/// Offline encoder: signed feature hashing of character trigrams.
///
/// Text is lowercased and whitespace-collapsed, then padded with boundary
/// markers so that short strings still produce trigrams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedTrigramEmbedder {
    dimension: usize,
}

impl HashedTrigramEmbedder {
    /// Panics on a zero dimension.
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashedTrigramEmbedder { dimension }
    }
}

impl Default for HashedTrigramEmbedder {
    fn default() -> Self {
        HashedTrigramEmbedder::new(DEFAULT_DIMENSION)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(chars: &[char]) -> u64 {
    let mut hash = FNV_OFFSET;
    let mut buf = [0u8; 4];
    for c in chars {
        for b in c.encode_utf8(&mut buf).bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(FNV_PRIME);
        }
    }
    // final avalanche so low bits depend on every input byte
    hash ^= hash >> 33;
    hash = hash.wrapping_mul(0xff51_afd7_ed55_8ccd);
    hash ^ (hash >> 33)
}

impl EmbeddingProvider for HashedTrigramEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let normalized = text.to_lowercase();
        let mut chars = vec!['\u{2}', '\u{2}'];
        let mut previous_space = false;
        for c in normalized.trim().chars() {
            if c.is_whitespace() {
                if !previous_space {
                    chars.push(' ');
                }
                previous_space = true;
            } else {
                chars.push(c);
                previous_space = false;
            }
        }
        chars.extend(['\u{3}', '\u{3}']);

        let mut vector = vec![0.0f32; self.dimension];
        for window in chars.windows(3) {
            let hash = fnv1a(window);
            let bucket = (hash % self.dimension as u64) as usize;
            let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
            vector[bucket] += sign;
        }
        if vector.iter().all(|x| *x == 0.0) {
            // every trigram cancelled out
            let bucket = (fnv1a(&chars) % self.dimension as u64) as usize;
            vector[bucket] = 1.0;
        }
        l2_normalize(&mut vector);
        Ok(vector)
    }
}
