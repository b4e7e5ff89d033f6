//! Dataset ingestion for LC-QuAD 2.0 style arrays, QALD style documents and
//! this crate's own JSONL sample files.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::sparql::parse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub id: String,
    pub question: String,
    pub gold_sparql: String,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// JSON array of records with `uid`, `question`, `sparql_wikidata`.
    Lcquad2,
    /// `{"questions": [{"id", "question": [{"language", "string"}], "query": {"sparql"}}]}`.
    Qald,
    /// One serialized [`DatasetSample`] per line.
    Jsonl,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lcquad2" | "lc-quad2" | "lcquad" => Ok(DatasetFormat::Lcquad2),
            "qald" => Ok(DatasetFormat::Qald),
            "jsonl" => Ok(DatasetFormat::Jsonl),
            other => Err(format!("unknown dataset format '{other}'")),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Lcquad2 => "lcquad2",
            DatasetFormat::Qald => "qald",
            DatasetFormat::Jsonl => "jsonl",
        })
    }
}

/// A record left out of evaluation, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quarantined {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedDataset {
    pub samples: Vec<DatasetSample>,
    pub quarantined: Vec<Quarantined>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("record {id}: {message}")]
    Schema { id: String, message: String },
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    format: DatasetFormat,
    split: Split,
) -> Result<LoadedDataset, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text, format, split)
}

/// `split` is assigned to formats that do not carry one.
pub fn parse_dataset(
    text: &str,
    format: DatasetFormat,
    split: Split,
) -> Result<LoadedDataset, DatasetError> {
    let raw = match format {
        DatasetFormat::Lcquad2 => lcquad2_records(text, split)?,
        DatasetFormat::Qald => qald_records(text, split)?,
        DatasetFormat::Jsonl => jsonl_records(text, split)?,
    };
    let mut out = LoadedDataset::default();
    for item in raw {
        match item {
            Ok(sample) => match parse(&sample.gold_sparql) {
                Ok(_) => out.samples.push(sample),
                Err(e) => out.quarantined.push(Quarantined {
                    id: sample.id,
                    reason: format!("gold query: {e}"),
                }),
            },
            Err(q) => out.quarantined.push(q),
        }
    }
    for q in &out.quarantined {
        log::warn!("quarantined {}: {}", q.id, q.reason);
    }
    Ok(out)
}

type RawRecord = Result<DatasetSample, Quarantined>;

fn id_of(value: Option<&Value>, fallback: usize) -> String {
    match value {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("#{fallback}"),
    }
}

fn non_empty_str(value: Option<&Value>) -> Option<&str> {
    value
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("n/a") && *s != "[]")
}

fn lcquad2_records(text: &str, split: Split) -> Result<Vec<RawRecord>, DatasetError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| DatasetError::Json(e.to_string()))?;
    let records = doc.as_array().ok_or_else(|| DatasetError::Schema {
        id: "<document>".into(),
        message: "expected a JSON array of records".into(),
    })?;
    let mut out = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let id = id_of(record.get("uid"), i);
        let sparql = match record.get("sparql_wikidata") {
            Some(Value::String(s)) => s.trim().to_string(),
            Some(_) => {
                return Err(DatasetError::Schema {
                    id,
                    message: "sparql_wikidata is not a string".into(),
                })
            }
            None => {
                return Err(DatasetError::Schema {
                    id,
                    message: "missing sparql_wikidata".into(),
                })
            }
        };
        let question = ["question", "paraphrased_question", "NNQT_question"]
            .iter()
            .find_map(|k| non_empty_str(record.get(*k)));
        out.push(match question {
            Some(q) => Ok(DatasetSample {
                id,
                question: q.to_string(),
                gold_sparql: sparql,
                split,
            }),
            None => Err(Quarantined {
                id,
                reason: "no question text".into(),
            }),
        });
    }
    Ok(out)
}

fn qald_records(text: &str, split: Split) -> Result<Vec<RawRecord>, DatasetError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| DatasetError::Json(e.to_string()))?;
    let records = doc
        .get("questions")
        .and_then(Value::as_array)
        .ok_or_else(|| DatasetError::Schema {
            id: "<document>".into(),
            message: "expected a top-level \"questions\" array".into(),
        })?;
    let mut out = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let id = id_of(record.get("id"), i);
        let sparql = record
            .get("query")
            .and_then(|q| q.get("sparql"))
            .and_then(Value::as_str)
            .ok_or_else(|| DatasetError::Schema {
                id: id.clone(),
                message: "missing query.sparql".into(),
            })?
            .trim()
            .to_string();
        let variants = record
            .get("question")
            .and_then(Value::as_array)
            .ok_or_else(|| DatasetError::Schema {
                id: id.clone(),
                message: "question is not a list of language variants".into(),
            })?;
        let english = variants.iter().find_map(|v| {
            let lang = v.get("language").and_then(Value::as_str)?;
            if lang.eq_ignore_ascii_case("en") {
                non_empty_str(v.get("string"))
            } else {
                None
            }
        });
        out.push(match english {
            Some(q) => Ok(DatasetSample {
                id,
                question: q.to_string(),
                gold_sparql: sparql,
                split,
            }),
            None => Err(Quarantined {
                id,
                reason: "no English question".into(),
            }),
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct JsonlSample {
    id: String,
    question: String,
    gold_sparql: String,
    split: Option<Split>,
}

fn jsonl_records(text: &str, split: Split) -> Result<Vec<RawRecord>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: JsonlSample = serde_json::from_str(line).map_err(|e| DatasetError::Schema {
            id: format!("line {}", i + 1),
            message: e.to_string(),
        })?;
        out.push(Ok(DatasetSample {
            id: s.id,
            question: s.question,
            gold_sparql: s.gold_sparql,
            split: s.split.unwrap_or(split),
        }));
    }
    Ok(out)
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[DatasetSample]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LCQUAD: &str = r#"[
      {"uid": 1, "question": "What is the capital of Germany?", "sparql_wikidata": "select ?o where { wd:Q183 wdt:P36 ?o }"},
      {"uid": 2, "question": null, "paraphrased_question": "Who founded Apple?", "sparql_wikidata": "select ?o where { wd:Q312 wdt:P112 ?o }"},
      {"uid": 3, "question": "n/a", "paraphrased_question": "", "NNQT_question": "What is {capital} of {France}", "sparql_wikidata": "select ?o where { wd:Q142 wdt:P36 ?o }"}
    ]"#;

    #[test]
    fn lcquad2_three_records() {
        let d = parse_dataset(LCQUAD, DatasetFormat::Lcquad2, Split::Train).unwrap();
        assert_eq!(d.samples.len(), 3);
        assert_eq!(d.samples[1].question, "Who founded Apple?");
        assert_eq!(d.samples[2].id, "3");
    }

    #[test]
    fn qald_english_only() {
        let langs = ["de", "ru", "pt", "hi", "fa", "it", "fr", "en"];
        let variants: Vec<String> = langs
            .iter()
            .map(|l| format!(r#"{{"language": "{l}", "string": "question in {l}"}}"#))
            .collect();
        let doc = format!(
            r#"{{"questions": [
              {{"id": "7", "question": [{}], "query": {{"sparql": "ask {{ wd:Q1 wdt:P2 wd:Q3 }}"}}}},
              {{"id": "8", "question": [{{"language": "de", "string": "nur deutsch"}}], "query": {{"sparql": "ask {{ }}"}}}},
              {{"id": 9, "question": [{{"language": "en", "string": "third"}}], "query": {{"sparql": "ask {{ ?a ?b ?c }}"}}}}
            ]}}"#,
            variants.join(",")
        );
        let d = parse_dataset(&doc, DatasetFormat::Qald, Split::Test).unwrap();
        assert_eq!(d.samples.len(), 2);
        assert_eq!(d.samples[0].question, "question in en");
        assert_eq!(d.samples[1].id, "9");
        assert_eq!(d.quarantined.len(), 1);
        assert_eq!(d.quarantined[0].id, "8");
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let samples: Vec<DatasetSample> = (0..3)
            .map(|i| DatasetSample {
                id: format!("s{i}"),
                question: "q".into(),
                gold_sparql: "select ?x where { ?x ?p ?o }".into(),
                split: Split::Valid,
            })
            .collect();
        write_samples(&path, &samples).unwrap();
        let d = load_dataset(&path, DatasetFormat::Jsonl, Split::Test).unwrap();
        assert_eq!(d.samples, samples);
    }

    #[test]
    fn unparseable_gold_is_quarantined() {
        let doc = r#"[
          {"uid": 1, "question": "a", "sparql_wikidata": "select ?o where { wd:Q1 wdt:P2 ?o"},
          {"uid": 2, "question": "b", "sparql_wikidata": "select ?o where { wd:Q1 wdt:P2 ?o }"}
        ]"#;
        let d = parse_dataset(doc, DatasetFormat::Lcquad2, Split::Test).unwrap();
        assert_eq!(d.samples.len(), 1);
        assert_eq!(d.quarantined[0].id, "1");
    }

    #[test]
    fn schema_error_names_record() {
        let doc = r#"[{"uid": 1, "question": "a", "sparql_wikidata": "ask {}"}, {"uid": 42, "question": "b"}]"#;
        match parse_dataset(doc, DatasetFormat::Lcquad2, Split::Test) {
            Err(DatasetError::Schema { id, .. }) => assert_eq!(id, "42"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
