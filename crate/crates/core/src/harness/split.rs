//! Train/valid/test split in which every test question mentions at least
//! one URI that no training question mentions.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetSample, Split};
use crate::kg::UriRef;
use crate::sparql::extract_uris;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub test_fraction: f64,
    pub valid_fraction: f64,
    /// Fail unless the requested test size is reached exactly.
    #[serde(default)]
    pub require_full: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            test_fraction: 0.1,
            valid_fraction: 0.1,
            require_full: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub requested_test: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// URIs withheld from training.
    pub held_out_uris: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnknownUriSplit {
    pub train: Vec<DatasetSample>,
    pub valid: Vec<DatasetSample>,
    pub test: Vec<DatasetSample>,
    pub report: SplitReport,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("cannot build an unknown-URI test set of {requested}; at most {max_achievable} reachable")]
    Infeasible {
        requested: usize,
        max_achievable: usize,
    },
    #[error("invalid split fractions: test {test}, valid {valid}")]
    InvalidFractions { test: f64, valid: f64 },
}

struct Greedy {
    held: BTreeSet<UriRef>,
    test: BTreeSet<usize>,
}

/// Withholds URIs rarest-first (ties in seeded order). Withholding a URI
/// moves every sample that mentions it out of training; a URI is taken only
/// if the test set stays within `target`.
fn greedy(
    uri_order: &[UriRef],
    postings: &BTreeMap<UriRef, Vec<usize>>,
    target: usize,
) -> Greedy {
    let mut g = Greedy {
        held: BTreeSet::new(),
        test: BTreeSet::new(),
    };
    for uri in uri_order {
        if g.test.len() >= target {
            break;
        }
        let fresh: Vec<usize> = postings[uri]
            .iter()
            .copied()
            .filter(|i| !g.test.contains(i))
            .collect();
        if g.test.len() + fresh.len() <= target {
            g.held.insert(*uri);
            g.test.extend(fresh);
        }
    }
    g
}

pub fn build_unknown_uri_split(
    samples: &[DatasetSample],
    seed: u64,
    options: SplitOptions,
) -> Result<UnknownUriSplit, SplitError> {
    let (tf, vf) = (options.test_fraction, options.valid_fraction);
    if !(tf > 0.0 && vf >= 0.0 && tf + vf < 1.0) {
        return Err(SplitError::InvalidFractions { test: tf, valid: vf });
    }
    let n = samples.len();
    let requested = ((tf * n as f64).round() as usize).max(1);

    let mut postings: BTreeMap<UriRef, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        for uri in extract_uris(&s.gold_sparql).iter() {
            postings.entry(uri).or_default().push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uri_order: Vec<UriRef> = postings.keys().copied().collect();
    uri_order.shuffle(&mut rng);
    uri_order.sort_by_key(|u| postings[u].len());

    let g = greedy(&uri_order, &postings, requested);
    if g.test.is_empty() || (options.require_full && g.test.len() < requested) {
        let best = greedy(&uri_order, &postings, n.saturating_sub(1));
        return Err(SplitError::Infeasible {
            requested,
            max_achievable: best.test.len(),
        });
    }

    let mut rest: Vec<usize> = (0..n).filter(|i| !g.test.contains(i)).collect();
    rest.shuffle(&mut rng);
    let n_valid = ((vf * n as f64).round() as usize).min(rest.len().saturating_sub(1));
    let valid: BTreeSet<usize> = rest[..n_valid].iter().copied().collect();

    let mut out = UnknownUriSplit {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
        report: SplitReport {
            requested_test: requested,
            train: 0,
            valid: 0,
            test: 0,
            held_out_uris: g.held.len(),
        },
    };
    for (i, s) in samples.iter().enumerate() {
        let mut s = s.clone();
        if g.test.contains(&i) {
            s.split = Split::Test;
            out.test.push(s);
        } else if valid.contains(&i) {
            s.split = Split::Valid;
            out.valid.push(s);
        } else {
            s.split = Split::Train;
            out.train.push(s);
        }
    }
    out.report.train = out.train.len();
    out.report.valid = out.valid.len();
    out.report.test = out.test.len();
    Ok(out)
}

/// Ids of test samples whose URIs all occur in training.
pub fn unseen_uri_violations(train: &[DatasetSample], test: &[DatasetSample]) -> Vec<String> {
    let seen: BTreeSet<UriRef> = train
        .iter()
        .flat_map(|s| extract_uris(&s.gold_sparql).iter().collect::<Vec<_>>())
        .collect();
    test.iter()
        .filter(|s| extract_uris(&s.gold_sparql).iter().all(|u| seen.contains(&u)))
        .map(|s| s.id.clone())
        .collect()
}
