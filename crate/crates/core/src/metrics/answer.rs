//! Answer-level F1 by executing queries against a SPARQL endpoint.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::http::{self, HttpFailure, RetryPolicy};

/// Result of one query. Rows are tuples in projection order, each value
/// serialized with its RDF term type; unbound cells are `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryAnswer {
    Boolean(bool),
    Rows(BTreeSet<Vec<Option<String>>>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndpointError {
    #[error("query timed out")]
    Timeout,
    #[error("endpoint rejected the query (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("unreadable result document: {0}")]
    Decode(String),
}

impl EndpointError {
    /// Failures attributable to the query rather than the connection.
    pub fn is_query_failure(&self) -> bool {
        matches!(self, EndpointError::Timeout | EndpointError::Rejected { .. })
    }
}

pub trait SparqlEndpoint: Send + Sync {
    fn execute(&self, query: &str) -> Result<QueryAnswer, EndpointError>;
}

impl<T: SparqlEndpoint + ?Sized> SparqlEndpoint for &T {
    fn execute(&self, query: &str) -> Result<QueryAnswer, EndpointError> {
        (**self).execute(query)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Minimum spacing between requests, in milliseconds.
    #[serde(default)]
    pub min_interval_ms: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Deserialize)]
struct ResultsDoc {
    #[serde(default)]
    head: ResultsHead,
    boolean: Option<bool>,
    results: Option<ResultsBody>,
}

#[derive(Deserialize, Default)]
struct ResultsHead {
    #[serde(default)]
    vars: Vec<String>,
}

#[derive(Deserialize)]
struct ResultsBody {
    bindings: Vec<BTreeMap<String, RdfTerm>>,
}

#[derive(Deserialize)]
struct RdfTerm {
    #[serde(rename = "type")]
    kind: String,
    value: String,
    #[serde(rename = "xml:lang")]
    lang: Option<String>,
    datatype: Option<String>,
}

impl RdfTerm {
    fn canonical(&self) -> String {
        let kind = if self.kind == "typed-literal" {
            "literal"
        } else {
            &self.kind
        };
        match (&self.lang, &self.datatype) {
            (Some(lang), _) => format!("{kind}:{}@{}", self.value, lang.to_lowercase()),
            (None, Some(dt)) => format!("{kind}:{}^^{dt}", self.value),
            (None, None) => format!("{kind}:{}", self.value),
        }
    }
}

/// Parses a SPARQL 1.1 JSON results document.
pub fn parse_results_json(text: &str) -> Result<QueryAnswer, EndpointError> {
    let doc: ResultsDoc =
        serde_json::from_str(text).map_err(|e| EndpointError::Decode(e.to_string()))?;
    answer_from_doc(doc)
}

fn answer_from_doc(doc: ResultsDoc) -> Result<QueryAnswer, EndpointError> {
    if let Some(b) = doc.boolean {
        return Ok(QueryAnswer::Boolean(b));
    }
    let body = doc
        .results
        .ok_or_else(|| EndpointError::Decode("neither boolean nor results".into()))?;
    let rows = body
        .bindings
        .iter()
        .map(|row| {
            doc.head
                .vars
                .iter()
                .map(|v| row.get(v).map(RdfTerm::canonical))
                .collect()
        })
        .collect();
    Ok(QueryAnswer::Rows(rows))
}

/// Endpoint speaking the SPARQL protocol (form-encoded POST, JSON results).
pub struct HttpSparqlEndpoint {
    config: EndpointConfig,
    agent: ureq::Agent,
    last_request: Mutex<Option<Instant>>,
}

impl HttpSparqlEndpoint {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = http::agent(Duration::from_secs(config.timeout_secs));
        HttpSparqlEndpoint {
            config,
            agent,
            last_request: Mutex::new(None),
        }
    }

    fn pace(&self) {
        if self.config.min_interval_ms == 0 {
            return;
        }
        let interval = Duration::from_millis(self.config.min_interval_ms);
        let mut last = self.last_request.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < interval {
                std::thread::sleep(interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

impl SparqlEndpoint for HttpSparqlEndpoint {
    fn execute(&self, query: &str) -> Result<QueryAnswer, EndpointError> {
        let doc: ResultsDoc = self
            .config
            .retry
            .run(|| {
                self.pace();
                http::post_form(
                    &self.agent,
                    &self.config.url,
                    "application/sparql-results+json",
                    &[("query", query)],
                )
            })
            .map_err(|e| match e {
                HttpFailure::Timeout => EndpointError::Timeout,
                HttpFailure::Status { status, body } if (400..500).contains(&status) => {
                    EndpointError::Rejected { status, body }
                }
                HttpFailure::Decode(m) => EndpointError::Decode(m),
                other => EndpointError::Transport(other.to_string()),
            })?;
        answer_from_doc(doc)
    }
}

/// F1 between two answers. Two empty row sets agree (1.0); ASK answers
/// score 1 or 0; a SELECT/ASK mix scores 0.
pub fn answer_set_f1(predicted: &QueryAnswer, gold: &QueryAnswer) -> f64 {
    match (predicted, gold) {
        (QueryAnswer::Boolean(p), QueryAnswer::Boolean(g)) => f64::from(u8::from(p == g)),
        (QueryAnswer::Rows(p), QueryAnswer::Rows(g)) => {
            if p.is_empty() && g.is_empty() {
                return 1.0;
            }
            let overlap = p.intersection(g).count() as f64;
            if overlap == 0.0 {
                return 0.0;
            }
            let precision = overlap / p.len() as f64;
            let recall = overlap / g.len() as f64;
            2.0 * precision * recall / (precision + recall)
        }
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerScore {
    Scored { f1: f64 },
    /// The gold query itself failed; the sample does not count.
    Excluded { reason: String },
}

/// Executes both queries and scores the predicted answer. A predicted query
/// that times out or is rejected scores 0; a failing gold query excludes the
/// sample. Connection failures are returned as errors.
pub fn answer_f1(
    predicted: Option<&str>,
    gold: &str,
    endpoint: &dyn SparqlEndpoint,
) -> Result<AnswerScore, EndpointError> {
    let gold_answer = match endpoint.execute(gold) {
        Ok(a) => a,
        Err(e) if e.is_query_failure() || matches!(e, EndpointError::Decode(_)) => {
            log::warn!("gold query failed, sample excluded: {e}");
            return Ok(AnswerScore::Excluded {
                reason: e.to_string(),
            });
        }
        Err(e) => return Err(e),
    };
    let Some(predicted) = predicted else {
        return Ok(AnswerScore::Scored { f1: 0.0 });
    };
    match endpoint.execute(predicted) {
        Ok(a) => Ok(AnswerScore::Scored {
            f1: answer_set_f1(&a, &gold_answer),
        }),
        Err(e) if e.is_query_failure() || matches!(e, EndpointError::Decode(_)) => {
            Ok(AnswerScore::Scored { f1: 0.0 })
        }
        Err(e) => Err(e),
    }
}
