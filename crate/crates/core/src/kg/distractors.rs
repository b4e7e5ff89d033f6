//! Irrelevant records used to inflate a memory for robustness experiments.

use std::collections::HashSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::memory::{read_metadata, Memory};
use super::record::KgRecord;
use super::uri::{UriKind, UriRef};
use super::KgError;
use crate::synth::text;

/// Generates `count` records of `kind` with random labels and descriptions.
/// Ids start above every id in `avoid` so they never collide with it.
pub fn synthetic_distractors(
    kind: UriKind,
    count: usize,
    avoid: &Memory,
    seed: u64,
) -> Vec<KgRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taken: HashSet<u64> = avoid.uris().map(|u| u.id()).collect();
    let mut next_id = taken.iter().max().map_or(1, |m| m + 1).max(10_000_000);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let id = next_id;
        next_id += 1;
        if taken.contains(&id) {
            continue;
        }
        let (label, description) = match kind {
            UriKind::Entity => (text::entity_label(&mut rng), text::entity_description(&mut rng)),
            UriKind::Relation => (
                text::relation_label(&mut rng),
                text::relation_description(&mut rng),
            ),
        };
        out.push(
            KgRecord::new(UriRef::new(kind, id), label, description)
                .expect("generated labels are non-empty"),
        );
    }
    out
}

/// Loads distractors from a metadata dump, dropping any that collide with
/// `avoid`.
pub fn load_distractors(
    path: impl AsRef<Path>,
    kind: UriKind,
    avoid: &Memory,
) -> Result<Vec<KgRecord>, KgError> {
    Ok(read_metadata(path, kind)?
        .into_iter()
        .filter(|r| !avoid.contains(r.uri()))
        .collect())
}
