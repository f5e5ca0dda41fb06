use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use gaia_core::fixture::villa;
use gaia_core::gaia::{
    assemble_prompt, propose, BackendConfig, BackendKind, DesignBackend, DispatchContext,
    DispatchError, HttpFailure, LlmBackend, PromptTemplate, ProposeOptions,
};
use gaia_core::xml::export_all;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    request_line: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Serves the scripted (status, body) replies in order, one per connection.
fn mock_server(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map(|(_, v)| v.parse().unwrap())
                .unwrap_or(0);
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (base, seen)
}

fn config(base: &str) -> BackendConfig {
    let mut c = BackendConfig::rule();
    c.kind = BackendKind::Llm;
    c.endpoint = base.to_string();
    c.api_key = Some("sk-test".into());
    c.params.model = "test-model".into();
    c.params.temperature = 0.2;
    c.params.max_tokens = Some(4096);
    c.retry.initial_backoff = Duration::from_millis(5);
    c.request_timeout = Duration::from_secs(10);
    c
}

fn chat_reply(content: &str) -> String {
    json!({"id": "x", "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})
        .to_string()
}

fn bundle() -> gaia_core::gaia::PromptBundle {
    let m = villa();
    let lib: Vec<String> = m.library.iter().map(|t| t.name.clone()).collect();
    assemble_prompt(&export_all(&m).unwrap(), "Detail all walls", &lib, &PromptTemplate::default())
        .unwrap()
}

const CTX: DispatchContext<'static> = DispatchContext {
    task: "Detail all walls",
    iteration: 1,
};

#[test]
fn request_wire_format() {
    let (base, seen) = mock_server(vec![(200, chat_reply("hello"))]);
    let backend = LlmBackend::new(config(&base)).unwrap();
    let b = bundle();
    assert_eq!(backend.respond(&b, CTX).unwrap(), "hello");
    assert_eq!(backend.tag(), "llm:test-model");

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    let req = &seen[0];
    assert_eq!(req.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(req.header("authorization"), Some("Bearer sk-test"));
    assert!(req.header("content-type").unwrap().starts_with("application/json"));
    assert_eq!(req.body["model"], "test-model");
    assert_eq!(req.body["temperature"], 0.2);
    assert_eq!(req.body["max_tokens"], 4096);
    let messages = req.body["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 2);
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[0]["content"], b.system_instruction.as_str());
    assert_eq!(messages[1]["role"], "user");
    assert_eq!(messages[1]["content"], b.user_message.as_str());
}

#[test]
fn retries_rate_limits_and_server_errors() {
    let (base, seen) = mock_server(vec![
        (429, "{\"error\":\"slow down\"}".into()),
        (500, "{\"error\":\"oops\"}".into()),
        (200, chat_reply("third time")),
    ]);
    let backend = LlmBackend::new(config(&base)).unwrap();
    assert_eq!(backend.respond(&bundle(), CTX).unwrap(), "third time");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn gives_up_after_three_attempts() {
    let (base, seen) = mock_server(vec![(503, "a".into()), (503, "b".into()), (503, "c".into())]);
    let backend = LlmBackend::new(config(&base)).unwrap();
    match backend.respond(&bundle(), CTX) {
        Err(DispatchError::Http {
            status: 503,
            kind: HttpFailure::Server,
            attempts: 3,
            ..
        }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn auth_failure_is_not_retried() {
    let (base, seen) = mock_server(vec![(401, "{\"error\":\"bad key\"}".into()), (200, chat_reply("no"))]);
    let backend = LlmBackend::new(config(&base)).unwrap();
    match backend.respond(&bundle(), CTX) {
        Err(DispatchError::Http {
            status: 401,
            kind: HttpFailure::Auth,
            attempts: 1,
            ..
        }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn transport_failure_is_retried_then_reported() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let backend = LlmBackend::new(config(&format!("http://127.0.0.1:{port}"))).unwrap();
    match backend.respond(&bundle(), CTX) {
        Err(DispatchError::Transport { attempts: 3, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_body_is_bad_response() {
    let (base, _) = mock_server(vec![(200, "{\"choices\":[]}".into())]);
    let backend = LlmBackend::new(config(&base)).unwrap();
    assert!(matches!(
        backend.respond(&bundle(), CTX),
        Err(DispatchError::BadResponse(_))
    ));
}

#[test]
fn fenced_reply_goes_through_the_pipeline() {
    let m = villa();
    let doc = export_all(&m).unwrap().text.replace(
        "id=\"W001\" type=\"Generic - 150mm\"",
        "id=\"W001\" type=\"Gypsum finishes 150mm\"",
    );
    let (base, _) = mock_server(vec![(200, chat_reply(&format!("Sure:\n```xml\n{doc}\n```\n")))]);
    let backend = LlmBackend::new(config(&base)).unwrap();
    let p = propose(&m, &m.wall_ids(), "Detail all walls", &backend, &ProposeOptions::default())
        .unwrap();
    assert_eq!(p.changeset.changes.len(), 1);
    assert_eq!(p.changeset.source, "llm:test-model");
}
