//! The remote backend against a local stub server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use proptest::prelude::*;
use tutorloop_core::gateway::{
    request_body, BackendConfig, BackendKind, ChatBackend, GatewayError, RemoteBackend, WireRequest,
};
use tutorloop_core::prompt::{ChatMessage, DelimiterStyle, RenderedPrompt, Role, TemplateId};

/// (authorization header, body) of each request the stub received.
type Seen = Arc<Mutex<Vec<(Option<String>, String)>>>;

struct Stub {
    base_url: String,
    requests: Seen,
}

/// Serves `replies` in order, one per connection, then closes.
fn stub(replies: Vec<(u16, String)>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = requests.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else {
                return;
            };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut request = vec![0; length];
            reader.read_exact(&mut request).unwrap();
            seen.lock()
                .unwrap()
                .push((auth, String::from_utf8(request).unwrap()));
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    Stub { base_url, requests }
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 3, "total_tokens": 14}
    })
    .to_string()
}

fn backend(base_url: &str, max_retries: u32) -> RemoteBackend {
    RemoteBackend::new(BackendConfig {
        kind: BackendKind::Remote,
        base_url: Some(base_url.to_string()),
        model_name: "stub-model".into(),
        max_retries,
        retry_base_ms: 10,
        timeout_secs: 5.0,
        api_key_env: "TUTORLOOP_GATEWAY_TEST_KEY".into(),
        ..BackendConfig::default()
    })
    .unwrap()
}

fn prompt(text: &str) -> RenderedPrompt {
    RenderedPrompt {
        template: TemplateId::ConceptMain,
        style: DelimiterStyle::TripleQuote,
        messages: vec![
            ChatMessage::system("You are a tutor."),
            ChatMessage::user(text),
        ],
    }
}

#[test]
fn content_and_usage_are_extracted() {
    std::env::set_var("TUTORLOOP_GATEWAY_TEST_KEY", "k-123");
    let s = stub(vec![(200, ok_body("a heap is a tree"))]);
    let c = backend(&s.base_url, 3)
        .complete(&prompt("What is a heap?"), None)
        .unwrap();
    assert_eq!(c.text, "a heap is a tree");
    assert_eq!(c.attempts, 1);
    assert_eq!(c.usage.unwrap().total_tokens, Some(14));

    let requests = s.requests.lock().unwrap();
    assert_eq!(requests[0].0.as_deref(), Some("Bearer k-123"));
    let sent: WireRequest = serde_json::from_str(&requests[0].1).unwrap();
    assert_eq!(sent.model, "stub-model");
    assert_eq!(sent.temperature, 0.0);
    assert_eq!(sent.messages[1].role, "user");
    assert_eq!(sent.messages[1].content, "What is a heap?");
}

#[test]
fn server_errors_are_retried() {
    let s = stub(vec![
        (503, "{}".into()),
        (503, "{}".into()),
        (200, ok_body("fine")),
    ]);
    let c = backend(&s.base_url, 3)
        .complete(&prompt("q"), None)
        .unwrap();
    assert_eq!((c.text.as_str(), c.attempts), ("fine", 3));
    assert_eq!(s.requests.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let s = stub(vec![
        (400, "{\"error\":\"bad\"}".into()),
        (200, ok_body("unused")),
    ]);
    let err = backend(&s.base_url, 3)
        .complete(&prompt("q"), None)
        .unwrap_err();
    assert!(matches!(err, GatewayError::HttpStatus { status: 400, .. }));
    assert_eq!(s.requests.lock().unwrap().len(), 1);
}

#[test]
fn zero_retries_means_one_attempt() {
    let s = stub(vec![(503, "{}".into()), (200, ok_body("unused"))]);
    let err = backend(&s.base_url, 0)
        .complete(&prompt("q"), None)
        .unwrap_err();
    assert!(matches!(err, GatewayError::HttpStatus { status: 503, .. }));
    assert_eq!(s.requests.lock().unwrap().len(), 1);
}

#[test]
fn malformed_bodies_are_not_retried() {
    let s = stub(vec![
        (200, "{\"choices\": []}".into()),
        (200, ok_body("unused")),
    ]);
    let err = backend(&s.base_url, 3)
        .complete(&prompt("q"), None)
        .unwrap_err();
    assert!(matches!(err, GatewayError::Malformed(_)));
    assert_eq!(s.requests.lock().unwrap().len(), 1);
}

#[test]
fn unreachable_servers_are_transport_failures() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let err = backend(&format!("http://127.0.0.1:{port}"), 1)
        .complete(&prompt("q"), None)
        .unwrap_err();
    assert!(matches!(err, GatewayError::Transport(_)), "{err:?}");
}

#[test]
fn a_silent_server_hits_the_deadline() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    thread::spawn(move || {
        let held: Vec<_> = listener.incoming().take(4).collect();
        thread::sleep(Duration::from_secs(5));
        drop(held);
    });
    let err = backend(&url, 3)
        .complete(&prompt("q"), Some(Duration::from_millis(500)))
        .unwrap_err();
    assert_eq!(err, GatewayError::DeadlineExceeded);
}

#[test]
fn empty_prompts_are_refused() {
    let err = backend("http://127.0.0.1:9", 0)
        .complete(&prompt("   "), None)
        .unwrap_err();
    assert_eq!(err, GatewayError::EmptyPrompt);
}

#[test]
fn remote_config_is_checked() {
    let missing_url = BackendConfig {
        kind: BackendKind::Remote,
        model_name: "m".into(),
        ..BackendConfig::default()
    };
    assert!(matches!(
        RemoteBackend::new(missing_url),
        Err(GatewayError::Config(_))
    ));
}

proptest! {
    #[test]
    fn requests_round_trip(turns in proptest::collection::vec((any::<bool>(), "\\PC{0,40}"), 1..6)) {
        let messages: Vec<ChatMessage> = turns
            .iter()
            .map(|(system, text)| if *system { ChatMessage::system(text.clone()) } else { ChatMessage::user(text.clone()) })
            .collect();
        let p = RenderedPrompt { template: TemplateId::CodeMain, style: DelimiterStyle::AngleTag, messages };
        let body = request_body(&p, "m", 0.0);
        let back: WireRequest = serde_json::from_str(&serde_json::to_string(&body).unwrap()).unwrap();
        prop_assert_eq!(back.messages.len(), p.messages.len());
        for (w, m) in back.messages.iter().zip(&p.messages) {
            let role = if m.role == Role::System { "system" } else { "user" };
            prop_assert_eq!(w.role.as_str(), role);
            prop_assert_eq!(&w.content, &m.content);
        }
    }
}
