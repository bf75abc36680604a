use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use discourse_dynamics::embedding::{
    EmbeddingError, EmbeddingProvider, RemoteEmbedder, RetryPolicy,
};
use serde_json::{json, Value};

type Reply = Box<dyn Fn(&Value) -> (u16, String) + Send + Sync>;

/// Minimal HTTP/1.1 server: one request per connection, replies computed
/// from the attempt number and the decoded JSON body.
struct MockServer {
    url: String,
    requests: Arc<Mutex<Vec<Value>>>,
}

impl MockServer {
    fn start(replies: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/embed", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut line = String::new();
                loop {
                    line.clear();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                log.lock().unwrap().push(body.clone());
                let reply = &replies[i.min(replies.len() - 1)];
                let (status, text) = reply(&body);
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        Self { url, requests }
    }

    fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn echo(dim: usize) -> Reply {
    Box::new(move |body: &Value| {
        let texts = body["texts"].as_array().unwrap();
        let embeddings: Vec<Vec<f64>> = texts
            .iter()
            .map(|t| {
                let mut v = vec![0.0; dim];
                v[0] = t.as_str().unwrap().len() as f64;
                v
            })
            .collect();
        (200, json!({ "embeddings": embeddings }).to_string())
    })
}

fn fail(status: u16) -> Reply {
    Box::new(move |_| (status, "{\"error\":\"busy\"}".into()))
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        backoff: vec![
            Duration::from_millis(10),
            Duration::from_millis(20),
            Duration::from_millis(40),
        ],
        request_timeout: Duration::from_secs(10),
    }
}

#[test]
fn default_backoff_schedule() {
    let p = RetryPolicy::default();
    assert_eq!(
        p.backoff,
        vec![
            Duration::from_millis(500),
            Duration::from_secs(1),
            Duration::from_secs(2)
        ]
    );
}

#[test]
fn batches_and_preserves_order() {
    let server = MockServer::start(vec![echo(8)]);
    let embedder = RemoteEmbedder::new(&server.url, 8, 2).with_retry(fast_retry());
    let texts = ["a", "bb", "ccc", "dddd", "eeeee"];
    let out = embedder.embed(&texts).unwrap();
    assert_eq!(server.request_count(), 3);
    let firsts: Vec<f64> = out.iter().map(|e| e.values()[0]).collect();
    assert_eq!(firsts, [1.0, 2.0, 3.0, 4.0, 5.0]);
    let sent: Vec<usize> = server
        .requests
        .lock()
        .unwrap()
        .iter()
        .map(|b| b["texts"].as_array().unwrap().len())
        .collect();
    assert_eq!(sent, [2, 2, 1]);
}

#[test]
fn retries_transient_failures() {
    let server = MockServer::start(vec![fail(500), fail(503), echo(4)]);
    let embedder = RemoteEmbedder::new(&server.url, 4, 64).with_retry(fast_retry());
    let out = embedder.embed(&["hello"]).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(server.request_count(), 3);
}

#[test]
fn gives_up_after_three_retries() {
    let server = MockServer::start(vec![fail(503)]);
    let embedder = RemoteEmbedder::new(&server.url, 4, 64).with_retry(fast_retry());
    let err = embedder.embed(&["hello"]).unwrap_err();
    assert!(
        matches!(err, EmbeddingError::ProviderUnavailable(_)),
        "{err:?}"
    );
    assert_eq!(server.request_count(), 4);
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let embedder = RemoteEmbedder::new(format!("http://127.0.0.1:{port}/embed"), 4, 64)
        .with_retry(fast_retry());
    assert!(matches!(
        embedder.embed(&["x"]),
        Err(EmbeddingError::ProviderUnavailable(_))
    ));
}

#[test]
fn wrong_dimension_is_rejected() {
    let server = MockServer::start(vec![echo(384)]);
    let embedder = RemoteEmbedder::new(&server.url, 512, 64).with_retry(fast_retry());
    let err = embedder.embed(&["hello", "world"]).unwrap_err();
    assert!(
        matches!(
            err,
            EmbeddingError::DimensionMismatch {
                expected: 512,
                actual: 384
            }
        ),
        "{err:?}"
    );
}

#[test]
fn wrong_count_is_bad_response() {
    let reply: Reply = Box::new(|_| (200, json!({ "embeddings": [[1.0, 2.0]] }).to_string()));
    let server = MockServer::start(vec![reply]);
    let embedder = RemoteEmbedder::new(&server.url, 2, 64).with_retry(fast_retry());
    assert!(matches!(
        embedder.embed(&["a", "b"]),
        Err(EmbeddingError::BadResponse(_))
    ));
}
