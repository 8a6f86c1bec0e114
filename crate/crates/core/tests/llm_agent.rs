//! LlmAgent against a throwaway local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use mrl_core::agent::{Agent, AgentError, AgentRequest, LlmAgent, LlmConfig};
use mrl_core::harness::ContextWindow;
use mrl_core::{ActionSpec, MetricSnapshot, MetricSummary};

struct Reply {
    status: u16,
    body: String,
    delay: Duration,
}

fn ok(content: &str) -> Reply {
    let body = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
    Reply { status: 200, body, delay: Duration::ZERO }
}

/// Serves `replies` in order and forwards each raw request (headers and
/// body) to the returned channel.
fn serve(replies: Vec<Reply>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for reply in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                head.push_str(&line);
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let _ = tx.send(format!("{head}\n{}", String::from_utf8_lossy(&body)));
            thread::sleep(reply.delay);
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                reply.status,
                reply.body.len(),
                reply.body
            );
        }
    });
    (url, rx)
}

fn config(endpoint: String, key_env: &str, timeout_s: f64) -> LlmConfig {
    LlmConfig {
        endpoint,
        model: "test-model".into(),
        temperature: 0.0,
        api_key_env: key_env.into(),
        timeout_s,
        reasoning_effort: None,
    }
}

fn request() -> AgentRequest {
    let snap = MetricSnapshot::new(1.0, 1).with_metric("l1d_miss_rate", MetricSummary::single(0.2217));
    AgentRequest::new(
        "compiler".into(),
        0,
        vec!["wall_time_s".into(), "l1d_miss_rate".into()],
        snap.clone(),
        vec![ActionSpec { id: "vectorize_enable".into(), category: "vectorize".into(), label: "v".into(), payload: serde_json::Value::Null }],
        vec!["L0".into()],
        ContextWindow { baseline: Some(snap), iterations: vec![] },
    )
}

const GOOD: &str = r#"{"hypothesis":{"mechanism":"cache misses","target_metric":"l1d_miss_rate","predicted_direction":"decrease"},"action_id":"vectorize_enable","rationale":"r"}"#;

#[test]
fn well_formed_reply_is_accepted_and_key_is_sent() {
    std::env::set_var("MRL_TEST_KEY_A", "sekrit");
    let (url, rx) = serve(vec![ok(GOOD)]);
    let mut agent = LlmAgent::new(config(url, "MRL_TEST_KEY_A", 5.0)).unwrap();
    assert_eq!(agent.id(), "llm:test-model");
    let d = agent.decide(&request()).unwrap();
    assert_eq!(d.action_id, "vectorize_enable");
    assert_eq!(d.raw_output, GOOD);
    let sent = rx.recv().unwrap();
    assert!(sent.to_ascii_lowercase().contains("authorization: bearer sekrit"));
    assert!(sent.contains("\"temperature\":0.0") || sent.contains("\"temperature\":0"));
    assert_eq!(agent.transcript().len(), 1);
}

#[test]
fn invalid_reply_gets_one_repair_with_validator_message() {
    let bad = GOOD.replace("l1d_miss_rate", "cache_misses");
    let (url, rx) = serve(vec![ok(&bad), ok(GOOD)]);
    let mut agent = LlmAgent::new(config(url, "MRL_TEST_KEY_UNSET", 5.0)).unwrap();
    let d = agent.decide(&request()).unwrap();
    assert_eq!(d.hypothesis.target_metric, "l1d_miss_rate");
    let first = rx.recv().unwrap();
    assert!(!first.to_ascii_lowercase().contains("authorization"));
    let second = rx.recv().unwrap();
    assert!(second.contains("hypothesis.target_metric"), "{second}");
    assert!(second.contains("cache_misses"));
    let attempts: Vec<u32> = agent.transcript().iter().map(|e| e.attempt).collect();
    assert_eq!(attempts, vec![0, 1]);
}

#[test]
fn second_invalid_reply_fails_the_agent() {
    let (url, _rx) = serve(vec![ok("no json"), ok("still none")]);
    let mut agent = LlmAgent::new(config(url, "MRL_TEST_KEY_UNSET", 5.0)).unwrap();
    assert!(matches!(agent.decide(&request()), Err(AgentError::Failure(_))));
}

#[test]
fn slow_server_times_out() {
    let slow = Reply { delay: Duration::from_millis(1500), ..ok(GOOD) };
    let (url, _rx) = serve(vec![slow]);
    let mut agent = LlmAgent::new(config(url, "MRL_TEST_KEY_UNSET", 0.3)).unwrap();
    let err = agent.decide(&request()).unwrap_err();
    assert!(matches!(err, AgentError::Transport(_)), "{err:?}");
    assert!(agent.transcript()[0].error.is_some());
}

#[test]
fn http_error_is_a_transport_error() {
    let (url, _rx) = serve(vec![Reply { status: 500, body: "{\"error\":\"boom\"}".into(), delay: Duration::ZERO }]);
    let mut agent = LlmAgent::new(config(url, "MRL_TEST_KEY_UNSET", 5.0)).unwrap();
    match agent.decide(&request()) {
        Err(AgentError::Transport(m)) => assert!(m.contains("500") && m.contains("boom"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn transcript_file_gets_one_line_per_exchange() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("llm_transcript.jsonl");
    let (url, _rx) = serve(vec![ok("nope"), ok(GOOD)]);
    let mut agent = LlmAgent::new(config(url, "MRL_TEST_KEY_UNSET", 5.0)).unwrap().with_transcript_file(path.clone());
    agent.decide(&request()).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 2);
}
