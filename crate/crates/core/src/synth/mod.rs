//! Synthetic KG records and corpora for offline experiments and tests.

pub mod corpus;
pub mod text;
