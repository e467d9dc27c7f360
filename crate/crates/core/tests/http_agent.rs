//! HTTP agent behavior against a local stub chat-completion server:
//! happy path, transient-failure retries, and credential handling.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use interview_core::agents::{AgentError, AgentSpec, ChatAgent, HttpAgent};
use interview_core::domain::ChatMessage;

struct StubResponse {
    status: u16,
    body: String,
}

fn chat_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{ "message": { "role": "assistant", "content": content } }]
    })
    .to_string()
}

/// Serves the queued responses one connection at a time, recording each raw
/// request. Stops after the queue is exhausted.
fn stub_server(responses: Vec<StubResponse>) -> (String, Arc<Mutex<Vec<String>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
    let addr = listener.local_addr().unwrap();
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&requests);
    let handle = std::thread::spawn(move || {
        for response in responses {
            let (mut stream, _) = listener.accept().expect("accept");
            let mut raw = Vec::new();
            let mut buf = [0u8; 4096];
            let mut header_end = None;
            while header_end.is_none() {
                let n = stream.read(&mut buf).expect("read");
                if n == 0 {
                    break;
                }
                raw.extend_from_slice(&buf[..n]);
                header_end = raw.windows(4).position(|w| w == b"\r\n\r\n");
            }
            if let Some(end) = header_end {
                let head = String::from_utf8_lossy(&raw[..end]).to_string();
                let content_length = head
                    .lines()
                    .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(str::trim).map(String::from))
                    .and_then(|v| v.parse::<usize>().ok())
                    .unwrap_or(0);
                while raw.len() < end + 4 + content_length {
                    let n = stream.read(&mut buf).expect("read body");
                    if n == 0 {
                        break;
                    }
                    raw.extend_from_slice(&buf[..n]);
                }
            }
            seen.lock().unwrap().push(String::from_utf8_lossy(&raw).to_string());
            let reply = format!(
                "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                response.status,
                response.body.len(),
                response.body
            );
            stream.write_all(reply.as_bytes()).expect("write");
        }
    });
    (format!("http://{addr}/v1"), requests, handle)
}

fn agent_for(endpoint: String, credential_env: Option<String>) -> HttpAgent {
    HttpAgent::new(AgentSpec {
        endpoint,
        model: "stub-model".into(),
        temperature: 0.0,
        max_tokens: 128,
        timeout_secs: 5,
        max_retries: 3,
        credential_env,
        backoff_base_ms: 0,
        in_flight_cap: Some(2),
    })
    .unwrap()
}

fn ask(agent: &HttpAgent) -> Result<String, AgentError> {
    agent.chat(&[ChatMessage::interviewer("hello")])
}

#[test]
fn happy_path_returns_reply_content() {
    let (endpoint, requests, server) =
        stub_server(vec![StubResponse { status: 200, body: chat_body("hi there") }]);
    let agent = agent_for(endpoint, None);
    assert_eq!(ask(&agent).unwrap(), "hi there");
    assert_eq!(agent.retries_recorded(), 0);
    server.join().unwrap();

    let raw = requests.lock().unwrap();
    assert!(raw[0].starts_with("POST /v1/chat/completions"));
    assert!(raw[0].contains("\"model\":\"stub-model\""));
    assert!(raw[0].contains("\"role\":\"user\""));
}

#[test]
fn malformed_bodies_are_retried_until_valid() {
    let (endpoint, _requests, server) = stub_server(vec![
        StubResponse { status: 200, body: "this is not json".into() },
        StubResponse { status: 200, body: r#"{"choices": []}"#.into() },
        StubResponse { status: 200, body: chat_body("recovered") },
    ]);
    let agent = agent_for(endpoint, None);
    assert_eq!(ask(&agent).unwrap(), "recovered");
    assert_eq!(agent.retries_recorded(), 2);
    server.join().unwrap();
}

#[test]
fn server_errors_exhaust_retries() {
    let (endpoint, _requests, server) = stub_server(vec![
        StubResponse { status: 500, body: "boom".into() },
        StubResponse { status: 500, body: "boom".into() },
        StubResponse { status: 500, body: "boom".into() },
        StubResponse { status: 500, body: "boom".into() },
    ]);
    let agent = agent_for(endpoint, None);
    match ask(&agent) {
        Err(AgentError::Network { retries, .. }) => assert_eq!(retries, 3),
        other => panic!("expected network error, got {other:?}"),
    }
    server.join().unwrap();
}

#[test]
fn auth_rejection_is_not_retried() {
    let (endpoint, _requests, server) =
        stub_server(vec![StubResponse { status: 401, body: "no".into() }]);
    let agent = agent_for(endpoint, None);
    assert!(matches!(ask(&agent), Err(AgentError::Auth { .. })));
    assert_eq!(agent.retries_recorded(), 0);
    server.join().unwrap();
}

#[test]
fn bearer_token_comes_from_the_named_env_var() {
    let (endpoint, requests, server) =
        stub_server(vec![StubResponse { status: 200, body: chat_body("ok") }]);
    std::env::set_var("STUB_INTERVIEW_KEY", "sekrit-token");
    let agent = agent_for(endpoint, Some("STUB_INTERVIEW_KEY".into()));
    assert_eq!(ask(&agent).unwrap(), "ok");
    server.join().unwrap();
    let raw = requests.lock().unwrap();
    assert!(raw[0].to_ascii_lowercase().contains("authorization: bearer sekrit-token"));
}

#[test]
fn missing_credential_env_is_an_auth_error() {
    let agent = agent_for("http://127.0.0.1:9".into(), Some("STUB_MISSING_KEY_VAR".into()));
    assert!(matches!(ask(&agent), Err(AgentError::Auth { .. })));
}

#[test]
fn unreachable_endpoint_is_a_network_error() {
    // nothing listens on this port; connection is refused immediately
    let agent = agent_for("http://127.0.0.1:9".into(), None);
    assert!(matches!(ask(&agent), Err(AgentError::Network { .. })));
}
