pub mod generation;
pub mod harness;
pub mod http;
pub mod kg;
pub mod metrics;
pub mod retrieval;
pub mod sparql;
pub mod synth;
pub mod transform;
