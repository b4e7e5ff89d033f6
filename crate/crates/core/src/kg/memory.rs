use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::{normalize_label, KgRecord, MetadataLine};
use super::uri::{UriKind, UriRef};
use super::KgError;
use crate::retrieval::embedder::EmbeddingProvider;
use crate::retrieval::index::FlatIndex;

/// Batch size used when embedding records.
const EMBED_BATCH: usize = 64;

/// Non-parametric store of URIs of one kind, indexed by normalized label and
/// by embedding.
///
/// A `Memory` is never edited in place; ablation, augmentation and embedding
/// return new values.
#[derive(Debug, Clone)]
pub struct Memory {
    kind: UriKind,
    dimension: Option<usize>,
    records: Vec<KgRecord>,
    by_uri: HashMap<UriRef, usize>,
    label_index: HashMap<String, Vec<UriRef>>,
    vector_index: FlatIndex,
}

impl PartialEq for Memory {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.dimension == other.dimension && self.records == other.records
    }
}

impl Memory {
    pub fn empty(kind: UriKind) -> Self {
        Memory {
            kind,
            dimension: None,
            records: Vec::new(),
            by_uri: HashMap::new(),
            label_index: HashMap::new(),
            vector_index: FlatIndex::default(),
        }
    }

    /// Builds a memory and its indexes, validating kind, uniqueness and
    /// embedding dimensions.
    pub fn from_records(kind: UriKind, records: Vec<KgRecord>) -> Result<Self, KgError> {
        let mut by_uri = HashMap::with_capacity(records.len());
        let mut label_index: HashMap<String, Vec<UriRef>> = HashMap::new();
        let mut dimension = None;
        for (position, record) in records.iter().enumerate() {
            let uri = record.uri();
            if uri.kind() != kind {
                return Err(KgError::KindMismatch {
                    line: None,
                    uri,
                    expected: kind,
                });
            }
            if by_uri.insert(uri, position).is_some() {
                return Err(KgError::DuplicateUri { line: None, uri });
            }
            label_index
                .entry(record.normalized_label().to_string())
                .or_default()
                .push(uri);
            if let Some(embedding) = record.embedding() {
                match dimension {
                    None => dimension = Some(embedding.len()),
                    Some(d) if d != embedding.len() => {
                        return Err(KgError::DimensionMismatch {
                            uri,
                            expected: d,
                            got: embedding.len(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        for uris in label_index.values_mut() {
            uris.sort_by_key(|u| u.id());
        }
        let mut vector_index = FlatIndex::with_capacity(dimension.unwrap_or(0), records.len());
        for record in &records {
            if let Some(embedding) = record.embedding() {
                vector_index.push(record.uri(), embedding);
            }
        }
        vector_index.compact();
        Ok(Memory {
            kind,
            dimension,
            records,
            by_uri,
            label_index,
            vector_index,
        })
    }

    /// Reads a line-delimited metadata file (`uri`, `label`, `description`).
    /// Embeddings are left unset.
    pub fn load_metadata(path: impl AsRef<Path>, kind: UriKind) -> Result<Self, KgError> {
        let records = read_metadata(path, kind)?;
        Self::from_records(kind, records)
    }

    pub fn kind(&self) -> UriKind {
        self.kind
    }

    /// Embedding dimension, once any record carries an embedding.
    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[KgRecord] {
        &self.records
    }

    pub fn get(&self, uri: UriRef) -> Option<&KgRecord> {
        self.by_uri.get(&uri).map(|&i| &self.records[i])
    }

    /// Membership test. URIs of the other kind are never contained.
    pub fn contains(&self, uri: UriRef) -> bool {
        uri.kind() == self.kind && self.by_uri.contains_key(&uri)
    }

    pub fn uris(&self) -> impl Iterator<Item = UriRef> + '_ {
        self.records.iter().map(|r| r.uri())
    }

    /// URIs whose normalized label equals the normalized form of `label`,
    /// ascending by id.
    pub fn lookup_label(&self, label: &str) -> &[UriRef] {
        self.label_index
            .get(&normalize_label(label))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn label_index(&self) -> &HashMap<String, Vec<UriRef>> {
        &self.label_index
    }

    pub fn vector_index(&self) -> &FlatIndex {
        &self.vector_index
    }

    /// True when every record has an embedding.
    pub fn is_embedded(&self) -> bool {
        !self.records.is_empty() && self.vector_index.len() == self.records.len()
    }

    /// Returns a copy where every record is (re-)embedded from its key text.
    pub fn embed(&self, embedder: &dyn EmbeddingProvider) -> Result<Self, KgError> {
        let dimension = embedder.dimension();
        let mut records = self.records.clone();
        for chunk in records.chunks_mut(EMBED_BATCH) {
            let texts: Vec<String> = chunk.iter().map(KgRecord::key_text).collect();
            let vectors = match embedder.embed_batch(&texts) {
                Ok(v) => v,
                Err(_) => {
                    // locate the failing record
                    for record in chunk.iter() {
                        if let Err(source) = embedder.embed(&record.key_text()) {
                            return Err(KgError::Embedding {
                                uri: record.uri(),
                                source,
                            });
                        }
                    }
                    return Err(KgError::Embedding {
                        uri: chunk[0].uri(),
                        source: crate::retrieval::EmbedError::Other(
                            "batch embedding failed".into(),
                        ),
                    });
                }
            };
            if vectors.len() != chunk.len() {
                return Err(KgError::Embedding {
                    uri: chunk[0].uri(),
                    source: crate::retrieval::EmbedError::Protocol(format!(
                        "{} vectors for {} inputs",
                        vectors.len(),
                        chunk.len()
                    )),
                });
            }
            for (record, vector) in chunk.iter_mut().zip(vectors) {
                if vector.len() != dimension {
                    return Err(KgError::DimensionMismatch {
                        uri: record.uri(),
                        expected: dimension,
                        got: vector.len(),
                    });
                }
                record.set_embedding(Some(vector));
            }
        }
        Self::from_records(self.kind, records)
    }

    /// Removes `⌊fraction·N⌋` uniformly sampled records. Returns the
    /// surviving memory and the removed URIs.
    pub fn ablate(&self, fraction: f64, seed: u64) -> Result<(Self, BTreeSet<UriRef>), KgError> {
        if !(0.0..=1.0).contains(&fraction) || fraction.is_nan() {
            return Err(KgError::InvalidFraction(fraction));
        }
        if self.is_empty() {
            return Err(KgError::EmptyMemory);
        }
        let n = self.records.len();
        let remove = removal_count(fraction, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked: HashSet<usize> = rand::seq::index::sample(&mut rng, n, remove)
            .into_iter()
            .collect();
        let mut removed = BTreeSet::new();
        let mut survivors = Vec::with_capacity(n - remove);
        for (i, record) in self.records.iter().enumerate() {
            if picked.contains(&i) {
                removed.insert(record.uri());
            } else {
                survivors.push(record.clone());
            }
        }
        let mut memory = Self::from_records(self.kind, survivors)?;
        if memory.dimension.is_none() {
            memory.dimension = self.dimension;
        }
        Ok((memory, removed))
    }

    /// Appends distractors until the memory holds `factor ×` its original
    /// size. Distractors are taken in order; the originals are untouched.
    pub fn augment_with_distractors(
        &self,
        distractors: &[KgRecord],
        factor: usize,
    ) -> Result<Self, KgError> {
        if factor == 0 {
            return Err(KgError::InvalidFactor(factor));
        }
        let needed = self.records.len() * (factor - 1);
        if distractors.len() < needed {
            return Err(KgError::InsufficientDistractors {
                needed,
                available: distractors.len(),
            });
        }
        let mut records = self.records.clone();
        let mut seen: HashSet<UriRef> = self.by_uri.keys().copied().collect();
        for distractor in &distractors[..needed] {
            if !seen.insert(distractor.uri()) {
                return Err(KgError::Collision(distractor.uri()));
            }
            records.push(distractor.clone());
        }
        Self::from_records(self.kind, records)
    }

    /// Drops every embedding and the vector index.
    pub fn without_embeddings(&self) -> Self {
        let records = self
            .records
            .iter()
            .cloned()
            .map(|mut r| {
                r.set_embedding(None);
                r
            })
            .collect();
        Self::from_records(self.kind, records).expect("records already validated")
    }
}

/// `⌊fraction · n⌋`, tolerant of binary rounding just below an integer.
pub fn removal_count(fraction: f64, n: usize) -> usize {
    let exact = fraction * n as f64;
    let rounded = exact.round();
    let count = if (exact - rounded).abs() < 1e-9 {
        rounded
    } else {
        exact.floor()
    };
    (count as usize).min(n)
}

/// Parses a metadata file into records, checking line syntax, URI kind and
/// duplicates. Errors carry the 1-based line number.
/// Writes records as JSONL metadata lines (embeddings are not stored).
pub fn write_metadata(path: impl AsRef<Path>, records: &[KgRecord]) -> Result<(), KgError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for r in records {
        let line = MetadataLine {
            uri: r.uri().canonical_text(),
            label: r.label().to_string(),
            description: r.description().to_string(),
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metadata(path: impl AsRef<Path>, kind: UriKind) -> Result<Vec<KgRecord>, KgError> {
    let file = File::open(path.as_ref())?;
    parse_metadata(BufReader::new(file), kind)
}

pub fn parse_metadata(reader: impl BufRead, kind: UriKind) -> Result<Vec<KgRecord>, KgError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: MetadataLine =
            serde_json::from_str(&line).map_err(|e| KgError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let uri = UriRef::parse(&parsed.uri).map_err(|e| KgError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if uri.kind() != kind {
            return Err(KgError::KindMismatch {
                line: Some(line_no),
                uri,
                expected: kind,
            });
        }
        if !seen.insert(uri) {
            return Err(KgError::DuplicateUri {
                line: Some(line_no),
                uri,
            });
        }
        let record = KgRecord::new(uri, parsed.label, parsed.description).map_err(|e| {
            KgError::Malformed {
                line: line_no,
                message: e.to_string(),
            }
        })?;
        records.push(record);
    }
    Ok(records)
}
