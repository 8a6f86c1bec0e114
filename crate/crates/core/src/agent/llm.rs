//! Language-model agent over a chat-completions style HTTP endpoint.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{parse_decision, Agent, AgentError, AgentRequest};
use crate::protocol::AgentDecision;

pub const SYSTEM_PROMPT: &str = include_str!("../../prompts/system_v1.txt");
pub const SYSTEM_PROMPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// Passed through verbatim as `reasoning_effort` when set.
    #[serde(default)]
    pub reasoning_effort: Option<String>,
}

fn default_timeout() -> f64 {
    120.0
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.timeout_s > 0.0) {
            return Err(format!("timeout_s must be positive, got {}", self.timeout_s));
        }
        if self.endpoint.is_empty() || self.model.is_empty() {
            return Err("endpoint and model are required".into());
        }
        Ok(())
    }
}

/// One request/response pair, kept for audit and replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub iteration: u32,
    pub attempt: u32,
    pub request: Value,
    pub response: Option<String>,
    pub error: Option<String>,
}

pub struct LlmAgent {
    config: LlmConfig,
    api_key: Option<String>,
    http: ureq::Agent,
    transcript: Vec<Exchange>,
    transcript_path: Option<PathBuf>,
}

impl LlmAgent {
    /// Reads the API key from the environment variable named in `config`.
    /// A missing variable is allowed (local endpoints often need no key).
    pub fn new(config: LlmConfig) -> Result<Self, AgentError> {
        config.validate().map_err(AgentError::Failure)?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let http: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, api_key, http, transcript: Vec::new(), transcript_path: None })
    }

    /// Appends every exchange as a JSON line to `path`.
    pub fn with_transcript_file(mut self, path: PathBuf) -> Self {
        self.transcript_path = Some(path);
        self
    }

    pub fn transcript(&self) -> &[Exchange] {
        &self.transcript
    }

    fn record(&mut self, exchange: Exchange) {
        log::debug!("llm exchange: {}", serde_json::to_string(&exchange).unwrap_or_default());
        if let Some(path) = &self.transcript_path {
            let line = serde_json::to_string(&exchange).unwrap_or_default();
            match OpenOptions::new().create(true).append(true).open(path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{line}");
                }
                Err(e) => log::warn!("cannot append transcript to {}: {e}", path.display()),
            }
        }
        self.transcript.push(exchange);
    }

    pub fn request_body(&self, messages: &[Value]) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        });
        if let Some(effort) = &self.config.reasoning_effort {
            body["reasoning_effort"] = json!(effort);
        }
        body
    }

    fn send(&mut self, iteration: u32, attempt: u32, messages: &[Value]) -> Result<String, AgentError> {
        let body = self.request_body(messages);
        let mut req = self.http.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let outcome = req
            .send(serde_json::to_vec(&body).expect("request body serializes"))
            .map_err(|e| AgentError::Transport(e.to_string()))
            .and_then(|mut resp| {
                let status = resp.status();
                let text = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| AgentError::Transport(e.to_string()))?;
                if !status.is_success() {
                    return Err(AgentError::Transport(format!("HTTP {status}: {text}")));
                }
                Ok(text)
            });
        let (response, error) = match &outcome {
            Ok(text) => (Some(text.clone()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        self.record(Exchange { iteration, attempt, request: body, response, error });
        let text = outcome?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| AgentError::Transport(format!("response is not JSON: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| AgentError::Transport("response has no choices[0].message.content".into()))
    }
}

/// The user message for one loop step.
pub fn render_request(request: &AgentRequest) -> String {
    let mut s = format!("Domain: {}\nIteration: {}\n\nCurrent metrics (median, std, repetitions):\n", request.domain_id, request.iteration);
    for name in &request.metric_names {
        match request.snapshot.metrics.get(name) {
            Some(m) => s.push_str(&format!("- {name}: {:.6} (std {:.6}, n={})\n", m.median, m.std, m.n_reps)),
            None => s.push_str(&format!("- {name}: unavailable\n")),
        }
    }
    s.push_str(&format!("Objective: {:.6}\n\nHistory:\n", request.snapshot.objective_value));
    s.push_str(&request.context.render(&request.actions));
    s.push_str("\nAvailable interventions (id | category | description):\n");
    for a in &request.actions {
        s.push_str(&format!("- {} | {} | {}\n", a.id, a.category, a.label));
    }
    if !request.sites.is_empty() {
        s.push_str(&format!("\nLoop markers: {}\n", request.sites.join(", ")));
    }
    s.push('\n');
    s.push_str(&request.schema);
    s
}

impl Agent for LlmAgent {
    fn id(&self) -> String {
        format!("llm:{}", self.config.model)
    }

    fn decide(&mut self, request: &AgentRequest) -> Result<AgentDecision, AgentError> {
        let mut messages = vec![
            json!({"role": "system", "content": SYSTEM_PROMPT}),
            json!({"role": "user", "content": render_request(request)}),
        ];
        let raw = self.send(request.iteration, 0, &messages)?;
        let err = match parse_decision(&raw, request) {
            Ok(d) => return Ok(d),
            Err(e) => e,
        };
        // single repair attempt with the validator message verbatim
        messages.push(json!({"role": "assistant", "content": raw}));
        messages.push(json!({
            "role": "user",
            "content": format!("Your previous response was rejected by the validator: {err}\nReply again with one JSON object that satisfies the schema."),
        }));
        let raw = self.send(request.iteration, 1, &messages)?;
        parse_decision(&raw, request)
            .map_err(|e| AgentError::Failure(format!("invalid output after repair attempt: {e}")))
    }
}
