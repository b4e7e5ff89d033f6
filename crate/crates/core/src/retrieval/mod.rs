//! Embedding providers, the flat vector index and the two-stage retriever.

pub mod embedder;
pub mod encoder_client;
pub mod index;
mod retriever;

pub use embedder::{EmbedError, EmbeddingProvider, HashedTrigramEmbedder, DEFAULT_DIMENSION};
pub use encoder_client::{EncoderClient, EncoderConfig};
pub use index::{FlatIndex, Hit};
pub use retriever::{
    ground_query, retrieve, retrieve_topk_for_question, GroundingOutcome, GroundingStatus,
    ResolutionMethod, RetrievalError, RetrievalResult, RetrieverOptions, DEFAULT_THRESHOLD,
    DIAGNOSTIC_CANDIDATES,
};
