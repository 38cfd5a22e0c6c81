#![cfg(feature = "remote")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use icpvi_core::backend::remote::{LogprobMode, RemoteBackend, RemoteConfig};
use icpvi_core::backend::BackendError;
use icpvi_core::{ScoreRequest, Scorer};
use serde_json::{json, Value};

struct Reply {
    status: u16,
    headers: Vec<(&'static str, String)>,
    body: String,
}

impl Reply {
    fn ok(body: Value) -> Self {
        Reply {
            status: 200,
            headers: Vec::new(),
            body: body.to_string(),
        }
    }

    fn status(status: u16) -> Self {
        Reply {
            status,
            headers: Vec::new(),
            body: "{}".into(),
        }
    }
}

/// Serves the scripted replies in order, one per connection, and records
/// every request body.
fn serve(replies: Vec<Reply>) -> (String, Arc<Mutex<Vec<Value>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for reply in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0u8; length];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(serde_json::from_slice(&body).unwrap());
            let mut head = format!(
                "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
                reply.status,
                reply.body.len()
            );
            for (k, v) in &reply.headers {
                head.push_str(&format!("{k}: {v}\r\n"));
            }
            head.push_str("\r\n");
            stream.write_all(head.as_bytes()).unwrap();
            stream.write_all(reply.body.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn config(url: &str, mode: LogprobMode) -> RemoteConfig {
    let mut c = RemoteConfig::new(url, mode);
    c.base_delay = Duration::from_millis(10);
    c.max_delay = Duration::from_millis(200);
    c.timeout = Duration::from_secs(10);
    c
}

fn echo_body(prompt: &str, target: &str, lp: f64) -> Value {
    json!({"choices": [{"logprobs": {
        "tokens": [prompt, target],
        "token_logprobs": [null, lp],
        "top_logprobs": [null, {target: lp, " 9": -3.0}],
        "text_offset": [0, prompt.chars().count()],
    }}]})
}

#[test]
fn echo_mode_reads_target_position() {
    let (url, seen) = serve(vec![Reply::ok(echo_body("Answer:", " 1", -0.25))]);
    let backend = RemoteBackend::new(config(&url, LogprobMode::Echo));
    let r = backend.score(&ScoreRequest::new("m", "Answer:", " 1")).unwrap();
    assert_eq!(r.logprob_nat, -0.25);
    assert_eq!(r.top_alternatives[0].0, " 1");
    let sent = &seen.lock().unwrap()[0];
    assert_eq!(sent["prompt"], "Answer: 1");
    assert_eq!(sent["echo"], true);
    assert_eq!(sent["max_tokens"], 0);
}

#[test]
fn echo_mode_rejects_multi_token_target() {
    let body = json!({"choices": [{"logprobs": {
        "tokens": ["Answer:", " 1", "0"],
        "token_logprobs": [null, -1.0, -2.0],
        "text_offset": [0, 7, 9],
    }}]});
    let (url, _) = serve(vec![Reply::ok(body)]);
    let backend = RemoteBackend::new(config(&url, LogprobMode::Echo));
    assert!(matches!(
        backend.score(&ScoreRequest::new("m", "Answer:", " 10")),
        Err(BackendError::TargetNotSingleToken { .. })
    ));
}

#[test]
fn top_k_mode_scores_all_candidates_in_one_call() {
    let body = json!({"choices": [{"logprobs": {
        "tokens": [" 0"],
        "token_logprobs": [-0.2],
        "top_logprobs": [{" 0": -0.2, " 1": -1.8, "\n": -4.0}],
    }}]});
    let (url, seen) = serve(vec![Reply::ok(body)]);
    let backend = RemoteBackend::new(config(&url, LogprobMode::TopK));
    let cands = vec![" 0".to_string(), " 1".to_string(), " 2".to_string()];
    let out = backend.score_candidates("m", "Answer:", &cands, 5);
    assert_eq!(out[0].as_ref().unwrap().logprob_nat, -0.2);
    assert_eq!(out[1].as_ref().unwrap().logprob_nat, -1.8);
    assert!(matches!(out[2], Err(BackendError::MissingTargetLogprob { ref token }) if token == " 2"));
    assert_eq!(seen.lock().unwrap().len(), 1);
    assert_eq!(seen.lock().unwrap()[0]["logprobs"], 5);
}

#[test]
fn retries_after_rate_limit() {
    let mut limited = Reply::status(429);
    limited.headers.push(("Retry-After", "0".into()));
    let (url, seen) = serve(vec![
        limited,
        Reply::status(503),
        Reply::ok(echo_body("p", " 0", -0.5)),
    ]);
    let backend = RemoteBackend::new(config(&url, LogprobMode::Echo));
    let r = backend.score(&ScoreRequest::new("m", "p", " 0")).unwrap();
    assert_eq!(r.logprob_nat, -0.5);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn gives_up_after_max_attempts() {
    let (url, seen) = serve((0..3).map(|_| Reply::status(500)).collect());
    let mut c = config(&url, LogprobMode::Echo);
    c.max_attempts = 3;
    let start = Instant::now();
    let err = RemoteBackend::new(c).score(&ScoreRequest::new("m", "p", " 0")).unwrap_err();
    assert!(matches!(err, BackendError::BackendUnavailable { attempts: 3, .. }));
    assert_eq!(seen.lock().unwrap().len(), 3);
    // 10 ms + 20 ms of backoff
    assert!(start.elapsed() >= Duration::from_millis(30));
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![Reply::status(400)]);
    let err = RemoteBackend::new(config(&url, LogprobMode::Echo))
        .score(&ScoreRequest::new("m", "p", " 0"))
        .unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)));
    assert_eq!(seen.lock().unwrap().len(), 1);
}
