//! The observe / hypothesize / act / feedback loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, AgentRequest};
use crate::analysis::score_iteration;
use crate::protocol::{
    ActionSpec, AgentDecision, IterationFlag, IterationRecord, LoopConfig, MetricSnapshot,
    ObjectiveSense, TrialRecord, Truncation,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    /// The domain cannot run at all (missing tool, bad kernel spec).
    #[error("domain setup failed: {0}")]
    Setup(String),
    /// One intervention failed to compile, run or train.
    #[error("domain failure: {0}")]
    Failure(String),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Result of applying one intervention.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    pub post: MetricSnapshot,
    pub flags: Vec<IterationFlag>,
}

/// An environment the loop can observe and intervene on. Implementations are
/// driven from one thread and must measure serially.
pub trait Domain {
    fn id(&self) -> String;
    /// Metric names every snapshot may carry, in presentation order.
    fn metric_names(&self) -> Vec<String>;
    fn actions(&self) -> Vec<ActionSpec>;
    fn objective_sense(&self) -> ObjectiveSense;
    /// Named intervention sites (compiler loop markers); empty when the
    /// domain has none.
    fn sites(&self) -> Vec<String> {
        Vec::new()
    }
    /// Prepares a fresh trial and returns the baseline snapshot.
    fn reset(&mut self, seed: u64) -> Result<MetricSnapshot, DomainError>;
    /// The reading shown to the agent before it decides.
    fn observe(&mut self) -> Result<MetricSnapshot, DomainError>;
    fn intervene(&mut self, decision: &AgentDecision) -> Result<Intervention, DomainError>;
    /// Diagnostics accumulated since the last call.
    fn drain_log(&mut self) -> Vec<String> {
        Vec::new()
    }
}

/// The history slice presented to the agent: the last `k` iterations, oldest
/// first, plus the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub baseline: Option<MetricSnapshot>,
    pub iterations: Vec<IterationRecord>,
}

pub fn build_context(trial: &TrialRecord, k: u32) -> ContextWindow {
    let k = k.max(1) as usize;
    let start = trial.iterations.len().saturating_sub(k);
    ContextWindow {
        baseline: Some(trial.baseline.clone()),
        iterations: trial.iterations[start..].to_vec(),
    }
}

fn rel_change(before: f64, after: f64) -> String {
    if before == 0.0 {
        format!("{:+.4}", after - before)
    } else {
        format!("{:+.2}%", 100.0 * (after - before) / before.abs())
    }
}

impl ContextWindow {
    /// Compact prompt rendering: per iteration the action, the hypothesis,
    /// the metric deltas and whether the objective improved.
    pub fn render(&self, actions: &[ActionSpec]) -> String {
        let mut out = String::new();
        if let Some(b) = &self.baseline {
            out.push_str(&format!("baseline: objective={:.6}", b.objective_value));
            for (name, m) in &b.metrics {
                out.push_str(&format!(", {name}={:.6}", m.median));
            }
            out.push('\n');
        }
        if self.iterations.is_empty() {
            out.push_str("no previous iterations\n");
        }
        for it in &self.iterations {
            let label = actions
                .iter()
                .find(|a| a.id == it.decision.action_id)
                .map_or(it.decision.action_id.as_str(), |a| a.label.as_str());
            let h = &it.decision.hypothesis;
            let deltas: Vec<String> = it
                .pre
                .metrics
                .iter()
                .filter_map(|(name, m)| {
                    it.post.metrics.get(name).map(|p| format!("{name} {}", rel_change(m.median, p.median)))
                })
                .collect();
            out.push_str(&format!(
                "[iteration {}] action: {} ({}); hypothesis: {} will {} ({}); metric changes: {}; objective {:.6} -> {:.6}; outcome: {}\n",
                it.index,
                label,
                it.decision.action_id,
                h.target_metric,
                h.predicted_direction,
                h.mechanism,
                if deltas.is_empty() { "none".to_string() } else { deltas.join(", ") },
                it.pre.objective_value,
                it.post.objective_value,
                if it.is_domain_failure() {
                    "failed to apply"
                } else if it.action_success {
                    "improved"
                } else {
                    "not improved"
                }
            ));
        }
        out
    }
}

/// Runs one trial of `config.n_iterations` loop steps.
///
/// An agent that fails (after its own repair attempt) truncates the trial at
/// that iteration. A domain failure is recorded as an iteration with
/// `post = pre`.
pub fn run_trial(
    domain: &mut dyn Domain,
    agent: &mut dyn Agent,
    config: &LoopConfig,
) -> Result<TrialRecord, HarnessError> {
    config.validate().map_err(HarnessError::Config)?;
    if config.objective_sense != domain.objective_sense() {
        return Err(HarnessError::Config(format!(
            "objective_sense {} does not match domain {} ({})",
            config.objective_sense,
            domain.id(),
            domain.objective_sense()
        )));
    }

    let baseline = domain.reset(config.seed)?;
    let actions = domain.actions();
    let metric_names = domain.metric_names();
    let sites = domain.sites();
    let mut trial = TrialRecord {
        domain_id: domain.id(),
        agent_id: agent.id(),
        config: config.clone(),
        iterations: Vec::new(),
        baseline,
        truncated: None,
        log: domain.drain_log(),
    };

    for index in 0..config.n_iterations {
        let pre = match domain.observe() {
            Ok(s) => s,
            Err(e) => {
                trial.truncated = Some(Truncation { at_iteration: index, reason: e.to_string() });
                break;
            }
        };
        let mut context = build_context(&trial, config.history_window_k);
        if !config.baseline_always_visible && index > 0 {
            context.baseline = None;
        }
        let request = AgentRequest::new(
            trial.domain_id.clone(),
            index,
            metric_names.clone(),
            pre.clone(),
            actions.clone(),
            sites.clone(),
            context,
        );
        let decision = match agent.decide(&request).and_then(|d| request.validate(d)) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("agent failure at iteration {index}: {e}");
                trial.truncated = Some(Truncation {
                    at_iteration: index,
                    reason: format!("agent failure: {e}"),
                });
                break;
            }
        };

        let (post, mut flags) = match domain.intervene(&decision) {
            Ok(iv) => (iv.post, iv.flags),
            Err(e) => (pre.clone(), vec![IterationFlag::DomainFailure { message: e.to_string() }]),
        };
        let failed = flags.iter().any(|f| matches!(f, IterationFlag::DomainFailure { .. }));
        let post = if failed { pre.clone() } else { post };
        let score = score_iteration(
            &decision,
            &pre,
            &post,
            config.objective_sense,
            config.noise_epsilon_rel,
        );
        flags.extend(score.flags);
        let action_success = score.action_success && !failed;
        trial.iterations.push(IterationRecord {
            index,
            objective_delta: post.objective_value - pre.objective_value,
            pre,
            decision,
            post,
            action_success,
            abductive_success: score.abductive_success,
            paradox_class: crate::protocol::ParadoxClass::classify(action_success, score.abductive_success),
            flags,
        });
        trial.log.extend(domain.drain_log());
    }
    Ok(trial)
}
