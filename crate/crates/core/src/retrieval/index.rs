//! Exact inner-product search over a dense row-major matrix.

use std::cmp::Ordering;

use crate::kg::UriRef;

/// Flat (brute-force) index. Rows are expected to be L2-normalized, so the
/// inner product is the cosine similarity.
///
/// Rows are kept row-major until [`FlatIndex::compact`] finds them sparse
/// enough, after which they are stored as per-dimension posting lists and a
/// query only touches the lists of its own non-zero coordinates. Both
/// layouts score every row exactly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatIndex {
    dimension: usize,
    storage: Storage,
    uris: Vec<UriRef>,
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(Vec<f32>),
    /// `postings[d]` holds `(row, value)` for every non-zero at dimension d.
    Sparse(Vec<Vec<(u32, f32)>>),
}

impl Default for Storage {
    fn default() -> Self {
        Storage::Dense(Vec::new())
    }
}

/// Largest non-zero fraction for which `compact` switches to postings.
pub const SPARSE_DENSITY: f64 = 0.3;

/// One scored hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub uri: UriRef,
    pub score: f32,
}

impl FlatIndex {
    pub fn new(dimension: usize) -> Self {
        FlatIndex {
            dimension,
            storage: Storage::Dense(Vec::new()),
            uris: Vec::new(),
        }
    }

    pub fn with_capacity(dimension: usize, capacity: usize) -> Self {
        FlatIndex {
            dimension,
            storage: Storage::Dense(Vec::with_capacity(dimension * capacity)),
            uris: Vec::with_capacity(capacity),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.uris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uris.is_empty()
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    /// Panics if `vector.len() != dimension`; callers validate dimensions.
    pub fn push(&mut self, uri: UriRef, vector: &[f32]) {
        assert_eq!(vector.len(), self.dimension, "vector dimension mismatch");
        let row = u32::try_from(self.uris.len()).expect("index holds at most u32::MAX rows");
        match &mut self.storage {
            Storage::Dense(rows) => rows.extend_from_slice(vector),
            Storage::Sparse(postings) => {
                for (d, &v) in vector.iter().enumerate() {
                    if v != 0.0 {
                        postings[d].push((row, v));
                    }
                }
            }
        }
        self.uris.push(uri);
    }

    /// Switches to posting lists when at most [`SPARSE_DENSITY`] of the
    /// stored coordinates are non-zero.
    pub fn compact(&mut self) {
        let Storage::Dense(rows) = &self.storage else {
            return;
        };
        if rows.is_empty() {
            return;
        }
        let nonzero = rows.iter().filter(|v| **v != 0.0).count();
        if nonzero as f64 > SPARSE_DENSITY * rows.len() as f64 {
            return;
        }
        let mut postings: Vec<Vec<(u32, f32)>> = vec![Vec::new(); self.dimension];
        for (row, values) in rows.chunks_exact(self.dimension).enumerate() {
            for (d, &v) in values.iter().enumerate() {
                if v != 0.0 {
                    postings[d].push((row as u32, v));
                }
            }
        }
        self.storage = Storage::Sparse(postings);
    }

    /// Top-k rows by inner product, best first. Equal scores are ordered by
    /// ascending URI id. `allow`, when given, restricts the search to those
    /// URIs.
    pub fn search(&self, query: &[f32], k: usize, allow: Option<&[UriRef]>) -> Vec<Hit> {
        if k == 0 || self.is_empty() || query.len() != self.dimension {
            return Vec::new();
        }
        let admitted = |uri: &UriRef| allow.is_none_or(|a| a.contains(uri));
        let mut top = TopK::new(k);
        match &self.storage {
            Storage::Dense(rows) => {
                for (row, uri) in rows.chunks_exact(self.dimension).zip(&self.uris) {
                    if admitted(uri) {
                        top.offer(Hit {
                            uri: *uri,
                            score: dot(row, query),
                        });
                    }
                }
            }
            Storage::Sparse(postings) => {
                let mut scores = vec![0.0f32; self.uris.len()];
                for (d, &q) in query.iter().enumerate() {
                    if q == 0.0 {
                        continue;
                    }
                    for &(row, v) in &postings[d] {
                        scores[row as usize] += q * v;
                    }
                }
                for (score, uri) in scores.into_iter().zip(&self.uris) {
                    if admitted(uri) {
                        top.offer(Hit { uri: *uri, score });
                    }
                }
            }
        }
        top.into_sorted()
    }
}

/// Best `k` hits seen so far, kept sorted by [`rank`].
struct TopK {
    k: usize,
    hits: Vec<Hit>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            hits: Vec::with_capacity(k.min(1024) + 1),
        }
    }

    fn offer(&mut self, hit: Hit) {
        if self.hits.len() == self.k {
            let worst = self.hits.last().expect("k >= 1");
            if rank(&hit, worst) != Ordering::Less {
                return;
            }
            self.hits.pop();
        }
        let at = self
            .hits
            .partition_point(|h| rank(h, &hit) == Ordering::Less);
        self.hits.insert(at, hit);
    }

    fn into_sorted(self) -> Vec<Hit> {
        self.hits
    }
}

fn rank(a: &Hit, b: &Hit) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.uri.id().cmp(&b.uri.id()))
}

/// Inner product with eight independent accumulators so the compiler can
/// vectorize the loop.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let tail: f32 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    acc.iter().sum::<f32>() + tail
}

/// Scales `v` to unit L2 norm in place. Zero vectors are left untouched.
pub fn l2_normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f32]) -> Vec<f32> {
        let mut v = v.to_vec();
        l2_normalize(&mut v);
        v
    }

    #[test]
    fn returns_best_first() {
        let mut index = FlatIndex::new(2);
        index.push(UriRef::entity(1), &unit(&[1.0, 0.0]));
        index.push(UriRef::entity(2), &unit(&[0.0, 1.0]));
        index.push(UriRef::entity(3), &unit(&[1.0, 1.0]));
        let hits = index.search(&unit(&[1.0, 0.2]), 3, None);
        let order: Vec<u64> = hits.iter().map(|h| h.uri.id()).collect();
        assert_eq!(order, vec![1, 3, 2]);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let mut index = FlatIndex::new(2);
        index.push(UriRef::entity(9), &[1.0, 0.0]);
        index.push(UriRef::entity(4), &[1.0, 0.0]);
        index.push(UriRef::entity(7), &[1.0, 0.0]);
        let hits = index.search(&[1.0, 0.0], 1, None);
        assert_eq!(hits[0].uri, UriRef::entity(4));
    }

    #[test]
    fn allow_list_restricts() {
        let mut index = FlatIndex::new(2);
        index.push(UriRef::entity(1), &[1.0, 0.0]);
        index.push(UriRef::entity(2), &[0.0, 1.0]);
        let hits = index.search(&[1.0, 0.0], 5, Some(&[UriRef::entity(2)]));
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].uri, UriRef::entity(2));
    }

    #[test]
    fn sparse_layout_matches_dense() {
        use crate::retrieval::{EmbeddingProvider, HashedTrigramEmbedder};
        let e = HashedTrigramEmbedder::default();
        let mut dense = FlatIndex::new(e.dimension());
        for i in 0..300u64 {
            let v = e.embed(&format!("record {i}. about {}", i % 17)).unwrap();
            dense.push(UriRef::entity(i + 1), &v);
        }
        let mut sparse = dense.clone();
        sparse.compact();
        assert!(sparse.is_sparse());
        for probe in ["record 5", "about 3", "nothing alike"] {
            let q = e.embed(probe).unwrap();
            let a = dense.search(&q, 5, None);
            let b = sparse.search(&q, 5, None);
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert!((x.score - y.score).abs() < 1e-5);
            }
            assert_eq!(a[0].uri, b[0].uri);
        }
        sparse.push(UriRef::entity(1000), &e.embed("late addition").unwrap());
        let q = e.embed("late addition").unwrap();
        assert_eq!(sparse.search(&q, 1, None)[0].uri, UriRef::entity(1000));
    }

    #[test]
    fn dense_vectors_stay_dense() {
        let mut index = FlatIndex::new(2);
        index.push(UriRef::entity(1), &[0.6, 0.8]);
        index.compact();
        assert!(!index.is_sparse());
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f32> = (0..11).map(|i| i as f32).collect();
        let expected: f32 = a.iter().map(|x| x * x).sum();
        assert_eq!(dot(&a, &a), expected);
    }
}
