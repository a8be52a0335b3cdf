mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use base64::Engine;
use metalogic::backends::{
    encode_mock_png, generate_image, BackendError, FailureKind, GenerationApi, GenerationRequest, HttpDetector,
    HttpGenerator, HttpGeneratorConfig, ImageGenerator, ObjectDetector, RetryPolicy, Side, WireDetections,
    LITERAL_PREFIX,
};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    headers: Vec<(String, String)>,
    body: Vec<u8>,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}

struct Reply {
    status: u16,
    content_type: &'static str,
    body: Vec<u8>,
}

fn reply(status: u16, body: impl Into<Vec<u8>>) -> Reply {
    Reply {
        status,
        content_type: "application/json",
        body: body.into(),
    }
}

/// Serves scripted replies in order, one per connection; the last one repeats.
struct Server {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

impl Server {
    fn start(script: Vec<Reply>) -> Server {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        thread::spawn(move || {
            for (n, stream) in listener.incoming().enumerate() {
                let Ok(stream) = stream else { break };
                let r = &script[n.min(script.len() - 1)];
                if let Some(req) = serve(stream, r) {
                    log.lock().unwrap().push(req);
                }
            }
        });
        Server { url, seen }
    }

    fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, r: &Reply) -> Option<Seen> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':')?;
        headers.push((k.trim().to_string(), v.trim().to_string()));
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    let mut out = stream;
    let head = format!(
        "HTTP/1.1 {} X\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        r.status,
        r.content_type,
        r.body.len()
    );
    out.write_all(head.as_bytes()).ok()?;
    out.write_all(&r.body).ok()?;
    Some(Seen { path, headers, body })
}

fn png() -> Vec<u8> {
    encode_mock_png(&WireDetections {
        detections: vec![],
        ocr: vec![],
        width: 8,
        height: 8,
    })
}

fn b64_reply() -> Reply {
    let b64 = base64::engine::general_purpose::STANDARD.encode(png());
    reply(200, json!({"data": [{"b64_json": b64}]}).to_string())
}

fn generator(api: GenerationApi, endpoint: &str, credential_env: Option<&str>) -> Result<HttpGenerator, BackendError> {
    HttpGenerator::new(HttpGeneratorConfig {
        name: "remote".into(),
        api,
        endpoint: endpoint.to_string(),
        credential_env: credential_env.map(str::to_string),
        model: Some("test-model".into()),
        size: None,
        timeout_s: 5,
    })
}

fn fast_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        initial_backoff_ms: 20,
        max_backoff_ms: 40,
        multiplier: 2.0,
    }
}

fn request(literal_prefix: bool) -> GenerationRequest {
    GenerationRequest {
        prompt: "There is a cat and a dog.".into(),
        seed: Some(7),
        model_profile: "remote".into(),
        literal_prefix,
    }
}

#[test]
fn retries_transient_failures_then_writes_png() {
    let server = Server::start(vec![reply(503, "busy"), reply(502, "gateway"), b64_reply()]);
    let g = generator(GenerationApi::OpenAi, &server.url, None).unwrap();
    let case = common::case("commutative-and", &["cat", "dog"]);
    let dir = tempfile::tempdir().unwrap();

    let started = Instant::now();
    let img = generate_image(&g, &request(true), &case, Side::A, dir.path(), &fast_retry(4), None).unwrap();
    assert!(started.elapsed() >= Duration::from_millis(60), "backoff 20ms then 40ms");

    let reqs = server.requests();
    assert_eq!(reqs.len(), 3);
    let body = reqs[2].json();
    assert_eq!(body["prompt"], format!("{LITERAL_PREFIX} There is a cat and a dog."));
    assert_eq!(body["response_format"], "b64_json");
    assert_eq!(body["model"], "test-model");
    assert_eq!(img.backend_name, "remote");
    assert_eq!(img.verify().unwrap(), png());
}

#[test]
fn exhausted_retries_become_transport_error() {
    let server = Server::start(vec![reply(500, "down")]);
    let g = generator(GenerationApi::OpenAi, &server.url, None).unwrap();
    let case = common::case("commutative-and", &["cat", "dog"]);
    let dir = tempfile::tempdir().unwrap();
    let err = generate_image(&g, &request(true), &case, Side::A, dir.path(), &fast_retry(3), None).unwrap_err();
    assert!(matches!(err, BackendError::Transport { attempts: 3, .. }), "{err:?}");
    assert_eq!(err.kind(), FailureKind::Errored);
    assert_eq!(server.requests().len(), 3);
    assert!(!dir.path().join(&case.case_id).join("a.png").exists());
}

#[test]
fn rate_limit_is_retried_then_reported() {
    let server = Server::start(vec![reply(429, "slow down")]);
    let g = generator(GenerationApi::OpenAi, &server.url, None).unwrap();
    let case = common::case("commutative-and", &["cat", "dog"]);
    let dir = tempfile::tempdir().unwrap();
    let err = generate_image(&g, &request(true), &case, Side::B, dir.path(), &fast_retry(2), None).unwrap_err();
    assert!(matches!(err, BackendError::RateLimitExhausted { attempts: 2 }), "{err:?}");
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn auth_failure_is_not_retried() {
    let server = Server::start(vec![reply(401, r#"{"error":"bad key"}"#)]);
    let g = generator(GenerationApi::OpenAi, &server.url, None).unwrap();
    let case = common::case("commutative-and", &["cat", "dog"]);
    let dir = tempfile::tempdir().unwrap();
    let err = generate_image(&g, &request(true), &case, Side::A, dir.path(), &fast_retry(4), None).unwrap_err();
    assert!(matches!(err, BackendError::Auth(_)), "{err:?}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn content_policy_rejection_is_skipped() {
    let body = json!({"error": {"code": "content_policy_violation", "message": "blocked"}}).to_string();
    let server = Server::start(vec![reply(400, body)]);
    let g = generator(GenerationApi::OpenAi, &server.url, None).unwrap();
    let case = common::case("commutative-and", &["cat", "dog"]);
    let err = g.generate(&request(true), &case, Side::A).unwrap_err();
    assert!(matches!(err, BackendError::ContentPolicy(_)), "{err:?}");
    assert_eq!(err.kind(), FailureKind::Skipped);
}

#[test]
fn credential_is_read_from_named_variable() {
    let err = generator(GenerationApi::OpenAi, "http://127.0.0.1:9", Some("METALOGIC_TEST_UNSET_KEY")).unwrap_err();
    assert!(matches!(err, BackendError::MissingCredential(ref v) if v == "METALOGIC_TEST_UNSET_KEY"));

    std::env::set_var("METALOGIC_TEST_KEY", "s3cret");
    let server = Server::start(vec![b64_reply()]);
    let g = generator(GenerationApi::OpenAi, &server.url, Some("METALOGIC_TEST_KEY")).unwrap();
    let case = common::case("commutative-and", &["cat", "dog"]);
    g.generate(&request(true), &case, Side::A).unwrap();
    assert_eq!(server.requests()[0].header("authorization"), Some("Bearer s3cret"));
}

#[test]
fn sd_api_sends_seed_and_raw_prompt() {
    let b64 = base64::engine::general_purpose::STANDARD.encode(png());
    let server = Server::start(vec![reply(200, json!({"images": [b64]}).to_string())]);
    let g = generator(GenerationApi::Sd, &server.url, None).unwrap();
    let case = common::case("commutative-and", &["cat", "dog"]);
    assert_eq!(g.generate(&request(false), &case, Side::A).unwrap(), png());
    let body = server.requests()[0].json();
    assert_eq!(body["prompt"], "There is a cat and a dog.");
    assert_eq!(body["seed"], 7);
}

#[test]
fn url_payload_is_fetched() {
    let image_server = Server::start(vec![Reply {
        status: 200,
        content_type: "image/png",
        body: png(),
    }]);
    let url = format!("{}/img/1.png", image_server.url);
    let server = Server::start(vec![reply(200, json!({"data": [{"url": url}]}).to_string())]);
    let g = generator(GenerationApi::OpenAi, &server.url, None).unwrap();
    let case = common::case("commutative-and", &["cat", "dog"]);
    assert_eq!(g.generate(&request(true), &case, Side::A).unwrap(), png());
    assert_eq!(image_server.requests()[0].path, "/img/1.png");
}

#[test]
fn missing_image_in_response_is_invalid() {
    let server = Server::start(vec![reply(200, "{\"data\": []}")]);
    let g = generator(GenerationApi::OpenAi, &server.url, None).unwrap();
    let case = common::case("commutative-and", &["cat", "dog"]);
    let err = g.generate(&request(true), &case, Side::A).unwrap_err();
    assert!(matches!(err, BackendError::InvalidResponse(_)), "{err:?}");
}

#[test]
fn detector_posts_image_and_parses_wire_format() {
    let wire = json!({
        "detections": [{"label": "dog", "score": 0.8, "bbox": [1, 2, 5, 6]}],
        "ocr": [{"text": "hi", "bbox": [0, 0, 2, 2]}],
        "width": 8,
        "height": 8
    });
    let server = Server::start(vec![reply(200, wire.to_string())]);
    let d = HttpDetector::new(&format!("{}/detect", server.url), 5);
    let got = d.detect(&png()).unwrap();
    assert_eq!(got.detections[0].label, "dog");
    assert_eq!(got.ocr[0].text, "hi");
    let seen = &server.requests()[0];
    assert_eq!(seen.path, "/detect");
    assert_eq!(seen.header("content-type"), Some("image/png"));
    assert_eq!(seen.body, png());
}

#[test]
fn detector_error_classes() {
    let server = Server::start(vec![reply(400, "undecodable"), reply(503, "loading"), reply(200, "{\"detections\": 3}")]);
    let d = HttpDetector::new(&server.url, 5);
    assert!(matches!(d.detect(&png()), Err(BackendError::UndecodableImage(_))));
    assert!(matches!(d.detect(&png()), Err(BackendError::Unavailable(_))));
    assert!(matches!(d.detect(&png()), Err(BackendError::InvalidResponse(_))));

    let closed = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", closed.local_addr().unwrap());
    drop(closed);
    assert!(matches!(HttpDetector::new(&url, 2).detect(&png()), Err(BackendError::Unavailable(_))));
}
