//! Query-level evaluation metrics.

mod answer;
mod bleu;

use serde::{Deserialize, Serialize};

pub use answer::{
    answer_f1, answer_set_f1, parse_results_json, AnswerScore, EndpointConfig, EndpointError,
    HttpSparqlEndpoint, QueryAnswer, SparqlEndpoint,
};
pub use bleu::{bleu, bleu_tokens, SMOOTHING_EPSILON};

use crate::kg::{Memory, UriKind};
use crate::retrieval::GroundingOutcome;
use crate::sparql::{canonicalize, extract_uris, parse};

/// Semantic query match: equal canonical forms. Unparseable input on either
/// side never matches.
pub fn sqm(predicted: &str, gold: &str) -> bool {
    match (parse(predicted), parse(gold)) {
        (Ok(p), Ok(g)) => canonicalize(&p) == canonicalize(&g),
        _ => false,
    }
}

/// Equal sets of `kind` URIs.
pub fn uri_em(predicted: &str, gold: &str, kind: UriKind) -> bool {
    extract_uris(predicted).of_kind(kind) == extract_uris(gold).of_kind(kind)
}

/// True when `predicted` mentions a URI absent from the memory of its kind.
pub fn hallucination(predicted: &str, entity_mem: &Memory, relation_mem: &Memory) -> bool {
    extract_uris(predicted).iter().any(|uri| match uri.kind() {
        UriKind::Entity => !entity_mem.contains(uri),
        UriKind::Relation => !relation_mem.contains(uri),
    })
}

/// What a pipeline produced for one question.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction<'a> {
    Query(&'a str),
    /// Grounding refused. `raw` is the model output.
    Refused { raw: &'a str },
    /// No usable query. `raw` is the model output.
    Malformed { raw: &'a str },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPairJudgment {
    pub sqm_match: bool,
    pub bleu: f64,
    pub qid_em: bool,
    pub pid_em: bool,
    pub hallucinated: bool,
    pub refused: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<AnswerScore>,
}

/// Scores one prediction. Refused and malformed predictions emit no query:
/// they never match or hallucinate, and BLEU uses the raw model text.
pub fn judge(
    prediction: Prediction<'_>,
    gold: &str,
    entity_mem: &Memory,
    relation_mem: &Memory,
) -> QueryPairJudgment {
    match prediction {
        Prediction::Query(q) => QueryPairJudgment {
            sqm_match: sqm(q, gold),
            bleu: bleu(q, gold),
            qid_em: uri_em(q, gold, UriKind::Entity),
            pid_em: uri_em(q, gold, UriKind::Relation),
            hallucinated: hallucination(q, entity_mem, relation_mem),
            refused: false,
            answer: None,
        },
        Prediction::Refused { raw } | Prediction::Malformed { raw } => QueryPairJudgment {
            sqm_match: false,
            bleu: bleu(raw, gold),
            qid_em: false,
            pid_em: false,
            hallucinated: false,
            refused: matches!(prediction, Prediction::Refused { .. }),
            answer: None,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefusalSplit {
    /// Share of unanswerable items that were refused, in percent. `None`
    /// when every item is answerable.
    pub refusal_accuracy: Option<f64>,
    /// Indices of answerable items, for computing SQM on that partition.
    pub answerable: Vec<usize>,
    pub unanswerable: usize,
}

/// Splits outcomes by answerability and scores refusals on the
/// unanswerable part.
pub fn refusal_accuracy<'a>(
    outcomes: impl IntoIterator<Item = (&'a GroundingOutcome, bool)>,
) -> RefusalSplit {
    let mut split = RefusalSplit::default();
    let mut refused = 0usize;
    for (i, (outcome, answerable)) in outcomes.into_iter().enumerate() {
        if answerable {
            split.answerable.push(i);
        } else {
            split.unanswerable += 1;
            if outcome.is_refusal() {
                refused += 1;
            }
        }
    }
    if split.unanswerable > 0 {
        split.refusal_accuracy = Some(percent(refused, split.unanswerable));
    }
    split
}

fn percent(count: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * count as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub sqm: f64,
    pub bleu: f64,
    pub qid_em: f64,
    pub pid_em: f64,
    pub uri_hallucination: f64,
    pub refusals: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refusal_accuracy: Option<f64>,
    /// Macro-averaged answer F1 over scored samples, in percent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(default)]
    pub f1_excluded: usize,
}

impl EvalReport {
    /// Means of the per-query values.
    pub fn from_judgments<'a>(judgments: impl IntoIterator<Item = &'a QueryPairJudgment>) -> Self {
        let mut r = EvalReport::default();
        let (mut sqm, mut qid, mut pid, mut hall) = (0, 0, 0, 0);
        let mut bleu_sum = 0.0;
        let (mut f1_sum, mut f1_n) = (0.0, 0usize);
        for j in judgments {
            r.n += 1;
            sqm += usize::from(j.sqm_match);
            qid += usize::from(j.qid_em);
            pid += usize::from(j.pid_em);
            hall += usize::from(j.hallucinated);
            r.refusals += usize::from(j.refused);
            bleu_sum += j.bleu;
            match &j.answer {
                Some(AnswerScore::Scored { f1 }) => {
                    f1_sum += f1;
                    f1_n += 1;
                }
                Some(AnswerScore::Excluded { .. }) => r.f1_excluded += 1,
                None => {}
            }
        }
        r.sqm = percent(sqm, r.n);
        r.qid_em = percent(qid, r.n);
        r.pid_em = percent(pid, r.n);
        r.uri_hallucination = percent(hall, r.n);
        r.bleu = if r.n == 0 { 0.0 } else { bleu_sum / r.n as f64 };
        if f1_n > 0 {
            r.f1 = Some(100.0 * f1_sum / f1_n as f64);
        }
        r
    }
}
