//! Agents: anything that turns an [`AgentRequest`] into an [`AgentDecision`].

mod llm;
mod parse;
mod random;
mod replay;
mod scripted;

use thiserror::Error;

pub use llm::{Exchange, LlmAgent, LlmConfig, SYSTEM_PROMPT, SYSTEM_PROMPT_VERSION};
pub use parse::parse_decision;
pub use random::RandomAgent;
pub use replay::ReplayAgent;
pub use scripted::{PriorAgent, PriorPolicy, SignalAgent, SignalPolicy};

use crate::harness::ContextWindow;
use crate::protocol::{ActionSpec, AgentDecision, MetricSnapshot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("schema violation in field {field:?}: {message}")]
    SchemaViolation { field: String, message: String },
    #[error("agent failure: {0}")]
    Failure(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("replay fixture exhausted after {0} decisions")]
    Exhausted(usize),
}

impl AgentError {
    pub(crate) fn schema(field: &str, message: impl Into<String>) -> Self {
        AgentError::SchemaViolation { field: field.into(), message: message.into() }
    }
}

pub trait Agent {
    fn id(&self) -> String;
    fn decide(&mut self, request: &AgentRequest) -> Result<AgentDecision, AgentError>;
}

/// Everything an agent is shown at one loop step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRequest {
    pub domain_id: String,
    pub iteration: u32,
    pub metric_names: Vec<String>,
    pub snapshot: MetricSnapshot,
    pub actions: Vec<ActionSpec>,
    pub sites: Vec<String>,
    pub context: ContextWindow,
    /// Output-format description handed to language-model agents; kept in
    /// sync with [`parse_decision`].
    pub schema: String,
}

impl AgentRequest {
    pub fn new(
        domain_id: String,
        iteration: u32,
        metric_names: Vec<String>,
        snapshot: MetricSnapshot,
        actions: Vec<ActionSpec>,
        sites: Vec<String>,
        context: ContextWindow,
    ) -> Self {
        let schema = schema_description(&metric_names, &actions, &sites);
        Self { domain_id, iteration, metric_names, snapshot, actions, sites, context, schema }
    }

    pub fn baseline(&self) -> Option<&MetricSnapshot> {
        self.context.baseline.as_ref()
    }

    pub fn action(&self, id: &str) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.id == id)
    }

    /// Checks a decision against the roster, metric list and sites.
    pub fn validate(&self, decision: AgentDecision) -> Result<AgentDecision, AgentError> {
        if self.action(&decision.action_id).is_none() {
            return Err(AgentError::schema(
                "action_id",
                format!("{:?} is not in the action roster", decision.action_id),
            ));
        }
        if !self.metric_names.contains(&decision.hypothesis.target_metric) {
            return Err(AgentError::schema(
                "hypothesis.target_metric",
                format!(
                    "{:?} is not one of the declared metrics [{}]",
                    decision.hypothesis.target_metric,
                    self.metric_names.join(", ")
                ),
            ));
        }
        if let Some(marker) = &decision.loop_marker {
            if !self.sites.is_empty() && !self.sites.contains(marker) {
                return Err(AgentError::schema(
                    "loop_marker",
                    format!("{marker:?} is not one of [{}]", self.sites.join(", ")),
                ));
            }
        }
        Ok(decision)
    }
}

fn quoted(items: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    items.into_iter().map(|s| format!("\"{}\"", s.as_ref())).collect::<Vec<_>>().join(" | ")
}

fn schema_description(metrics: &[String], actions: &[ActionSpec], sites: &[String]) -> String {
    let mut s = String::from("Respond with exactly one JSON object of this shape:\n{\n");
    s.push_str("  \"hypothesis\": {\n");
    s.push_str("    \"mechanism\": string (the causal mechanism you believe limits the objective),\n");
    s.push_str(&format!("    \"target_metric\": {},\n", quoted(metrics)));
    s.push_str("    \"predicted_direction\": \"increase\" | \"decrease\"\n");
    s.push_str("  },\n");
    s.push_str(&format!("  \"action_id\": {},\n", quoted(actions.iter().map(|a| a.id.as_str()))));
    if sites.is_empty() {
        s.push_str("  \"rationale\": string\n");
    } else {
        s.push_str("  \"rationale\": string,\n");
        s.push_str(&format!(
            "  \"loop_marker\": {} (optional; defaults to {})\n",
            quoted(sites),
            sites[0]
        ));
    }
    s.push_str("}\n");
    s.push_str("target_metric is the metric your hypothesis predicts will move after the action, and predicted_direction is how it will move.\n");
    s
}
