use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use pgmr::generation::{ChatClient, ChatConfig, GenerationError, GenerationParams, GenerationProvider};
use pgmr::http::RetryPolicy;
use pgmr::metrics::{answer_f1, AnswerScore, EndpointConfig, HttpSparqlEndpoint, QueryAnswer, SparqlEndpoint};
use pgmr::retrieval::{EmbedError, EmbeddingProvider, EncoderClient, EncoderConfig};

#[derive(Debug, Clone)]
struct Request {
    path: String,
    headers: Vec<(String, String)>,
    body: String,
}

impl Request {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

struct Reply {
    status: u16,
    body: String,
    delay: Duration,
}

fn reply(status: u16, body: impl Into<String>) -> Reply {
    Reply {
        status,
        body: body.into(),
        delay: Duration::ZERO,
    }
}

/// Serves each connection with `handler` and records every request.
fn serve(
    handler: impl Fn(&Request, usize) -> Reply + Send + Sync + 'static,
) -> (String, Arc<Mutex<Vec<Request>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let handler = Arc::new(handler);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let (log, handler) = (log.clone(), handler.clone());
            // one thread per connection so a slow reply does not block the next
            thread::spawn(move || handle(stream, &log, &*handler));
        }
    });
    (url, seen)
}

fn handle(
    mut stream: std::net::TcpStream,
    log: &Mutex<Vec<Request>>,
    handler: &(dyn Fn(&Request, usize) -> Reply + Send + Sync),
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).is_err() {
        return;
    }
    let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let request = Request {
        path,
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    };
    let n = {
        let mut seen = log.lock().unwrap();
        seen.push(request.clone());
        seen.len()
    };
    let r = handler(&request, n);
    thread::sleep(r.delay);
    let _ = write!(
        stream,
        "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        r.status,
        r.body.len(),
        r.body
    );
}

fn no_retry() -> RetryPolicy {
    RetryPolicy {
        max_retries: 0,
        base_delay_ms: 0,
    }
}

fn encoder(url: String, batch_size: usize, retry: RetryPolicy) -> EncoderClient {
    EncoderClient::new(EncoderConfig {
        base_url: url,
        model: Some("enc".into()),
        auth_token: Some("secret".into()),
        dimension: 2,
        timeout_secs: 5,
        batch_size,
        retry,
    })
}

#[test]
fn encoder_normalizes_and_batches() {
    let (url, seen) = serve(|req, _| {
        let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
        let n = body["input"].as_array().unwrap().len();
        let data: Vec<_> = (0..n).map(|_| serde_json::json!({"embedding": [3.0, 4.0]})).collect();
        reply(200, serde_json::json!({ "data": data }).to_string())
    });
    let client = encoder(url, 2, no_retry());
    let texts: Vec<String> = (0..5).map(|i| format!("t{i}")).collect();
    let out = client.embed_batch(&texts).unwrap();
    assert_eq!(out.len(), 5);
    for v in &out {
        assert!((v[0] - 0.6).abs() < 1e-6 && (v[1] - 0.8).abs() < 1e-6);
    }
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[0].header("authorization"), Some("Bearer secret"));
    let first: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(first["model"], "enc");
    assert_eq!(first["input"], serde_json::json!(["t0", "t1"]));
}

#[test]
fn encoder_rejects_wrong_dimension() {
    let (url, _) = serve(|_, _| reply(200, r#"{"data":[{"embedding":[1.0,0.0,0.0]}]}"#));
    let err = encoder(url, 8, no_retry()).embed("x").unwrap_err();
    assert!(matches!(err, EmbedError::DimensionMismatch { expected: 2, got: 3 }), "{err}");
}

#[test]
fn encoder_retries_server_errors() {
    let (url, seen) = serve(|_, n| {
        if n < 3 {
            reply(503, "busy")
        } else {
            reply(200, r#"{"data":[{"embedding":[0.0,2.0]}]}"#)
        }
    });
    let retry = RetryPolicy {
        max_retries: 3,
        base_delay_ms: 1,
    };
    assert_eq!(encoder(url, 8, retry).embed("x").unwrap(), vec![0.0, 1.0]);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

fn chat(url: String) -> ChatClient {
    ChatClient::new(ChatConfig {
        base_url: format!("{url}/v1/"),
        model: "m".into(),
        api_key: Some("k".into()),
        timeout_secs: 5,
        retry: no_retry(),
    })
}

#[test]
fn chat_sends_single_user_message() {
    let (url, seen) = serve(|_, _| {
        reply(200, r#"{"choices":[{"message":{"role":"assistant","content":"ask { }"}}]}"#)
    });
    let out = chat(url).generate("Question: q", &GenerationParams::default()).unwrap();
    assert_eq!(out, "ask { }");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].header("authorization"), Some("Bearer k"));
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["model"], "m");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(
        body["messages"],
        serde_json::json!([{"role": "user", "content": "Question: q"}])
    );
}

#[test]
fn chat_client_errors_are_not_retriable() {
    let (url, _) = serve(|_, _| reply(401, "no"));
    let err = chat(url).generate("p", &GenerationParams::default()).unwrap_err();
    assert!(matches!(err, GenerationError::Http { status: 401, .. }), "{err}");
    assert!(!err.is_retriable());
}

const ROWS: &str = r#"{"head":{"vars":["x"]},"results":{"bindings":[
  {"x":{"type":"uri","value":"http://www.wikidata.org/entity/Q1"}},
  {"x":{"type":"literal","value":"one","xml:lang":"EN"}}]}}"#;

fn endpoint(url: String, timeout_secs: u64) -> HttpSparqlEndpoint {
    HttpSparqlEndpoint::new(EndpointConfig {
        url,
        timeout_secs,
        min_interval_ms: 0,
        retry: no_retry(),
    })
}

#[test]
fn endpoint_posts_form_and_parses_rows() {
    let (url, seen) = serve(|_, _| reply(200, ROWS));
    let answer = endpoint(url, 5).execute("select ?x where { ?x ?p ?o }").unwrap();
    let QueryAnswer::Rows(rows) = answer else {
        panic!("expected rows")
    };
    assert!(rows.contains(&vec![Some("literal:one@en".to_string())]));
    let seen = seen.lock().unwrap();
    assert!(seen[0].body.starts_with("query=select"));
    assert_eq!(seen[0].header("accept"), Some("application/sparql-results+json"));
}

#[test]
fn gold_timeout_excludes_sample() {
    let (url, _) = serve(|req, _| {
        if req.body.contains("slow") {
            Reply {
                status: 200,
                body: ROWS.into(),
                delay: Duration::from_millis(2500),
            }
        } else {
            reply(200, ROWS)
        }
    });
    let ep = endpoint(url, 1);
    let score = answer_f1(Some("select ?x where { ?x ?p ?o }"), "select ?slow where { ?slow ?p ?o }", &ep)
        .unwrap();
    assert!(matches!(score, AnswerScore::Excluded { .. }), "{score:?}");

    let score = answer_f1(Some("select ?slow where { ?slow ?p ?o }"), "select ?x where { ?x ?p ?o }", &ep)
        .unwrap();
    assert_eq!(score, AnswerScore::Scored { f1: 0.0 });
}

#[test]
fn rejected_queries_follow_scoring_rules() {
    let (url, _) = serve(|req, _| {
        if req.body.contains("bad") {
            reply(400, "parse error")
        } else {
            reply(200, ROWS)
        }
    });
    let ep = endpoint(url, 5);
    assert!(matches!(
        answer_f1(Some("select ?x where { }"), "bad", &ep).unwrap(),
        AnswerScore::Excluded { .. }
    ));
    assert_eq!(
        answer_f1(Some("bad"), "select ?x where { }", &ep).unwrap(),
        AnswerScore::Scored { f1: 0.0 }
    );
    assert_eq!(
        answer_f1(Some("select ?y where { }"), "select ?x where { }", &ep).unwrap(),
        AnswerScore::Scored { f1: 1.0 }
    );
}
