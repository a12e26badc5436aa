use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::Value;
use untangle_core::agents::{AgentFunction, PromptBundle, Role};
use untangle_core::llm::{Backend, HttpBackend, LlmConfig};
use untangle_core::Error;

struct MockServer {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<String>>>,
    headers: Arc<Mutex<Vec<String>>>,
}

/// Serves `(status, body)` pairs in order, repeating the last one.
fn serve(responses: Vec<(u16, String)>) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let headers = Arc::new(Mutex::new(Vec::new()));
    let (h, b, hd) = (hits.clone(), bodies.clone(), headers.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                hd.lock().unwrap().push(line.trim_end().to_string());
            }
            let mut body = vec![0u8; len];
            let _ = reader.read_exact(&mut body);
            b.lock().unwrap().push(String::from_utf8_lossy(&body).into_owned());
            let n = h.fetch_add(1, Ordering::SeqCst);
            let (status, text) = &responses[n.min(responses.len() - 1)];
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    MockServer {
        url,
        hits,
        bodies,
        headers,
    }
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 3}
    })
    .to_string()
}

fn config(url: &str, attempts: u32) -> LlmConfig {
    LlmConfig {
        endpoint: url.into(),
        model: "test-model".into(),
        api_key_env: None,
        max_attempts: attempts,
        backoff_base_ms: 5,
        backoff_max_ms: 40,
        timeout_secs: 5.0,
        ..LlmConfig::default()
    }
}

fn bundle() -> PromptBundle {
    PromptBundle {
        role: Role::Explicit,
        function: AgentFunction::Untangle,
        system: "system text".into(),
        user: "user text".into(),
    }
}

#[test]
fn success_after_two_rate_limits() {
    let server = serve(vec![
        (429, "{}".into()),
        (429, "{}".into()),
        (200, ok_body("hello")),
    ]);
    let backend = HttpBackend::new(config(&server.url, 5)).unwrap();
    let c = backend.complete(&bundle()).unwrap();
    assert_eq!(c.text, "hello");
    assert_eq!(c.usage.attempts, 3);
    assert_eq!(c.usage.prompt_tokens, Some(11));
    assert_eq!(c.usage.backoff_ms, vec![5, 10]);
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);

    let sent: Value = serde_json::from_str(&server.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(sent["model"], "test-model");
    assert_eq!(sent["temperature"], 0.0);
    assert_eq!(sent["messages"][0]["role"], "system");
    assert_eq!(sent["messages"][0]["content"], "system text");
    assert_eq!(sent["messages"][1]["content"], "user text");
}

#[test]
fn persistent_server_error_exhausts_attempts() {
    let server = serve(vec![(500, "oops".into())]);
    let backend = HttpBackend::new(config(&server.url, 3)).unwrap();
    match backend.complete(&bundle()) {
        Err(Error::Transport { attempts, message }) => {
            assert_eq!(attempts, 3);
            assert!(message.contains("500"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_error_is_not_retried() {
    let server = serve(vec![(401, "{\"error\":\"bad key\"}".into())]);
    let backend = HttpBackend::new(config(&server.url, 4)).unwrap();
    assert!(matches!(backend.complete(&bundle()), Err(Error::Config(_))));
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_success_body_is_protocol_error() {
    let server = serve(vec![(200, "{\"choices\":[]}".into())]);
    let backend = HttpBackend::new(config(&server.url, 2)).unwrap();
    assert!(matches!(backend.complete(&bundle()), Err(Error::Protocol { .. })));
}

#[test]
fn api_key_is_read_from_named_variable() {
    let server = serve(vec![(200, ok_body("k"))]);
    std::env::set_var("UNTANGLE_HTTP_TEST_KEY", "sekret");
    let cfg = LlmConfig {
        api_key_env: Some("UNTANGLE_HTTP_TEST_KEY".into()),
        ..config(&server.url, 1)
    };
    HttpBackend::new(cfg).unwrap().complete(&bundle()).unwrap();
    let headers = server.headers.lock().unwrap();
    assert!(headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer sekret")));
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = HttpBackend::new(config(&format!("http://127.0.0.1:{port}/x"), 2)).unwrap();
    assert!(matches!(
        backend.complete(&bundle()),
        Err(Error::Transport { attempts: 2, .. })
    ));
}

#[test]
fn concurrent_calls_respect_in_flight_cap() {
    let server = serve(vec![(200, ok_body("c"))]);
    let backend = HttpBackend::new(LlmConfig {
        max_in_flight: 2,
        ..config(&server.url, 1)
    })
    .unwrap();
    thread::scope(|s| {
        for _ in 0..6 {
            s.spawn(|| assert_eq!(backend.complete(&bundle()).unwrap().text, "c"));
        }
    });
    assert_eq!(server.hits.load(Ordering::SeqCst), 6);
}
