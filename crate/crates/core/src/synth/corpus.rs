//! Synthetic question/query corpora over generated entity and relation
//! memories.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::text;
use crate::harness::dataset::{DatasetSample, Split};
use crate::kg::{normalize_label, KgRecord, Memory, UriKind, UriRef};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    pub samples: usize,
    pub entities: usize,
    pub relations: usize,
    /// Share of entities that reuse another entity's label (with their own
    /// description).
    pub duplicate_labels: f64,
    pub seed: u64,
}

impl CorpusOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        CorpusOptions {
            samples,
            entities: (samples * 2).max(40),
            relations: 60,
            duplicate_labels: 0.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub entities: Memory,
    pub relations: Memory,
    pub samples: Vec<DatasetSample>,
}

fn distinct_ids(rng: &mut ChaCha8Rng, count: usize, max: u64) -> Vec<u64> {
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let id = rng.random_range(1..=max);
        if seen.insert(id) {
            out.push(id);
        }
    }
    out
}

fn records(
    rng: &mut ChaCha8Rng,
    kind: UriKind,
    count: usize,
    max_id: u64,
    duplicate_share: f64,
) -> Vec<KgRecord> {
    let ids = distinct_ids(rng, count, max_id);
    let mut labels = HashSet::new();
    let mut descriptions = HashSet::new();
    let mut pairs: Vec<(String, String)> = Vec::with_capacity(count);
    while pairs.len() < count {
        let (label, description) = match kind {
            UriKind::Entity => (text::entity_label(rng), text::entity_description(rng)),
            UriKind::Relation => (text::relation_label(rng), text::relation_description(rng)),
        };
        if labels.insert(normalize_label(&label)) && descriptions.insert(description.clone()) {
            pairs.push((label, description));
        }
    }
    let duplicates = ((duplicate_share * count as f64).round() as usize).min(count / 2);
    for j in 0..duplicates {
        // the second half donates its labels to the first
        let donor = count - 1 - j;
        pairs[j].0 = pairs[donor].0.clone();
    }
    ids.into_iter()
        .zip(pairs)
        .map(|(id, (label, description))| {
            KgRecord::new(UriRef::new(kind, id), label, description)
                .expect("generated labels are non-empty")
        })
        .collect()
}

struct Pick<'a> {
    rng: &'a mut ChaCha8Rng,
    entities: &'a [KgRecord],
    relations: &'a [KgRecord],
}

impl<'a> Pick<'a> {
    fn entities(&mut self, n: usize) -> Vec<&'a KgRecord> {
        self.entities.choose_multiple(self.rng, n).collect()
    }

    fn relations(&mut self, n: usize) -> Vec<&'a KgRecord> {
        self.relations.choose_multiple(self.rng, n).collect()
    }
}

fn e(r: &KgRecord) -> String {
    r.uri().canonical_text()
}

fn p(r: &KgRecord) -> u64 {
    r.uri().id()
}

/// One (question, query) pair from a random template.
fn instance(pick: &mut Pick<'_>) -> (String, String) {
    let template = pick.rng.random_range(0..8);
    let es = pick.entities(2);
    let rs = pick.relations(2);
    let (e1, e2, r1, r2) = (es[0], es[1], rs[0], rs[1]);
    let (l1, l2, m1, m2) = (e1.label(), e2.label(), r1.label(), r2.label());
    match template {
        0 => (
            format!("What is the {m1} of {l1}?"),
            format!("select distinct ?obj where {{ {} wdt:p{} ?obj }}", e(e1), p(r1)),
        ),
        1 => (
            format!("Which item has {m1} {l1} and {m2} {l2}?"),
            format!(
                "select distinct ?sbj where {{ ?sbj wdt:p{} {} . ?sbj wdt:p{} {} }}",
                p(r1),
                e(e1),
                p(r2),
                e(e2)
            ),
        ),
        2 => (
            format!("Is {l2} the {m1} of {l1}?"),
            format!("ask {{ {} wdt:p{} {} }}", e(e1), p(r1), e(e2)),
        ),
        3 => (
            format!("What is the {m2} of the {m1} of {l1}?"),
            format!(
                "select ?answer where {{ {} wdt:p{} ?x . ?x wdt:p{} ?answer }}",
                e(e1),
                p(r1),
                p(r2)
            ),
        ),
        4 => (
            format!("How many {m1} does {l1} have?"),
            format!(
                "select (count(?obj) as ?value) where {{ {} wdt:p{} ?obj }}",
                e(e1),
                p(r1)
            ),
        ),
        5 => (
            format!("What is the {m2} for {l1} having {m1} {l2}?"),
            format!(
                "select ?value where {{ {} p:p{} ?s . ?s ps:p{} {} . ?s pq:p{} ?value }}",
                e(e1),
                p(r1),
                p(r1),
                e(e2),
                p(r2)
            ),
        ),
        6 => (
            format!("List up to five {m1} of {l1}."),
            format!(
                "select distinct ?obj where {{ {} wdt:p{} ?obj }} order by ?obj limit 5",
                e(e1),
                p(r1)
            ),
        ),
        _ => (
            format!("Which items other than {l2} have {m1} {l1}?"),
            format!(
                "select distinct ?sbj where {{ ?sbj wdt:p{} {} . filter(?sbj != {}) }}",
                p(r1),
                e(e1),
                e(e2)
            ),
        ),
    }
}

pub fn generate_corpus(options: &CorpusOptions) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut ents = records(
        &mut rng,
        UriKind::Entity,
        options.entities.max(2),
        9_999_999,
        options.duplicate_labels,
    );
    let rels = records(&mut rng, UriKind::Relation, options.relations.max(2), 20_000, 0.0);
    ents.shuffle(&mut rng);
    let mut samples = Vec::with_capacity(options.samples);
    {
        let mut pick = Pick {
            rng: &mut rng,
            entities: &ents,
            relations: &rels,
        };
        for i in 0..options.samples {
            let (question, gold_sparql) = instance(&mut pick);
            samples.push(DatasetSample {
                id: format!("syn-{i:05}"),
                question,
                gold_sparql,
                split: Split::Test,
            });
        }
    }
    SyntheticCorpus {
        entities: Memory::from_records(UriKind::Entity, ents).expect("distinct ids"),
        relations: Memory::from_records(UriKind::Relation, rels).expect("distinct ids"),
        samples,
    }
}

/// Deletes one random letter so the label no longer matches exactly but
/// stays close in embedding space.
pub fn perturb_label<R: Rng + ?Sized>(label: &str, rng: &mut R) -> String {
    let positions: Vec<usize> = label
        .char_indices()
        .filter(|(_, c)| c.is_alphanumeric())
        .map(|(i, _)| i)
        .collect();
    if positions.len() < 2 {
        return format!("{label}x");
    }
    let at = *positions.choose(rng).expect("non-empty");
    let mut out = String::with_capacity(label.len());
    out.push_str(&label[..at]);
    let ch_len = label[at..].chars().next().map_or(0, char::len_utf8);
    out.push_str(&label[at + ch_len..]);
    out
}
