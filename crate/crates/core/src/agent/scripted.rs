//! Deterministic policies standing in for the two processing modes:
//! signal-dominated (hypothesis derived from the observed deterioration)
//! and prior-dominated (a fixed heuristic regardless of observations).

use std::collections::BTreeMap;

use super::{Agent, AgentError, AgentRequest};
use crate::protocol::{AgentDecision, Direction, Hypothesis, MetricSnapshot};

#[derive(Debug, Clone, PartialEq)]
pub struct SignalPolicy {
    /// Direction in which each metric gets worse.
    pub bad_direction: BTreeMap<String, Direction>,
    /// Corrective action for each metric.
    pub action_for: BTreeMap<String, String>,
    pub mechanism_for: BTreeMap<String, String>,
}

impl SignalPolicy {
    fn from_rows(rows: &[(&str, Direction, &str, &str)]) -> Self {
        let mut p = SignalPolicy {
            bad_direction: BTreeMap::new(),
            action_for: BTreeMap::new(),
            mechanism_for: BTreeMap::new(),
        };
        for (metric, bad, action, mechanism) in rows {
            p.bad_direction.insert(metric.to_string(), *bad);
            p.action_for.insert(metric.to_string(), action.to_string());
            p.mechanism_for.insert(metric.to_string(), mechanism.to_string());
        }
        p
    }

    pub fn compiler() -> Self {
        use Direction::*;
        Self::from_rows(&[
            ("wall_time_s", Increase, "unroll_4", "loop overhead dominates the hot loop"),
            ("ipc", Decrease, "interleave_enable", "too little instruction-level parallelism"),
            ("l1d_miss_rate", Increase, "prefetch_16", "loads miss in L1 and stall the pipeline"),
            ("branch_miss_rate", Increase, "unroll_8", "loop-exit branches are mispredicted"),
        ])
    }

    pub fn train() -> Self {
        use Direction::*;
        Self::from_rows(&[
            ("train_loss", Increase, "lr_down_2x", "step size too large for the loss surface"),
            ("val_loss", Increase, "dropout_up_0.1", "model overfits the training split"),
            ("val_accuracy", Decrease, "lr_down_2x", "optimization overshoots good minima"),
            ("grad_norm_mean", Increase, "clip_on_1.0", "gradient magnitudes are unstable"),
            ("grad_norm_max", Increase, "clip_on_1.0", "gradient spikes destabilize updates"),
            ("loss_variance", Increase, "batch_up_2x", "minibatch noise is too high"),
            ("convergence_rate", Decrease, "lr_up_2x", "learning rate too small to make progress"),
        ])
    }

    /// Policy for the hidden-cause domain from an effect table as the agent
    /// believes it: the indicator of cause `j` maps to the action the table
    /// rates best for `j`.
    pub fn synth(belief: &[Vec<f64>]) -> Self {
        let mut p = SignalPolicy {
            bad_direction: BTreeMap::new(),
            action_for: BTreeMap::new(),
            mechanism_for: BTreeMap::new(),
        };
        for (cause, row) in belief.iter().enumerate() {
            let metric = crate::domain::synth::indicator_name(cause);
            p.bad_direction.insert(metric.clone(), Direction::Increase);
            p.action_for.insert(metric.clone(), crate::domain::synth::action_id(argmax(row)));
            p.mechanism_for.insert(metric, format!("bottleneck {cause} is active"));
        }
        p
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Targets the metric with the largest relative deterioration since the
/// baseline and applies the policy's corrective action.
#[derive(Debug, Clone)]
pub struct SignalAgent {
    policy: SignalPolicy,
    remembered_baseline: Option<MetricSnapshot>,
}

impl SignalAgent {
    pub fn new(policy: SignalPolicy) -> Self {
        Self { policy, remembered_baseline: None }
    }
}

fn deterioration(bad: Direction, base: f64, cur: f64) -> f64 {
    let d = bad.sign() * (cur - base);
    if base == 0.0 {
        d
    } else {
        d / base.abs()
    }
}

impl Agent for SignalAgent {
    fn id(&self) -> String {
        "scripted:signal".into()
    }

    fn decide(&mut self, request: &AgentRequest) -> Result<AgentDecision, AgentError> {
        if let Some(b) = request.baseline() {
            self.remembered_baseline = Some(b.clone());
        }
        let base = self
            .remembered_baseline
            .as_ref()
            .ok_or_else(|| AgentError::Failure("signal agent needs a baseline snapshot".into()))?;

        let mut best: Option<(&str, f64)> = None;
        for name in &request.metric_names {
            let (Some(bad), Some(_)) = (self.policy.bad_direction.get(name), self.policy.action_for.get(name)) else {
                continue;
            };
            let (Some(b), Some(c)) = (base.median(name), request.snapshot.median(name)) else {
                continue;
            };
            let score = deterioration(*bad, b, c);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((name, score));
            }
        }
        let (metric, score) =
            best.ok_or_else(|| AgentError::Failure("no observed metric is covered by the signal policy".into()))?;
        let direction = self.policy.bad_direction[metric].opposite();
        let action_id = self.policy.action_for[metric].clone();
        let mechanism = self.policy.mechanism_for.get(metric).cloned().unwrap_or_default();
        Ok(AgentDecision {
            hypothesis: Hypothesis {
                mechanism: mechanism.clone(),
                target_metric: metric.to_string(),
                predicted_direction: direction,
            },
            raw_output: format!("signal: {metric} deteriorated by {score:.6}; apply {action_id}"),
            rationale: format!("{metric} shows the largest deterioration since baseline; {mechanism}"),
            action_id,
            loop_marker: None,
        })
    }
}

/// A fixed hypothesis and action.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorPolicy {
    pub target_metric: String,
    pub direction: Direction,
    pub action_id: String,
    pub mechanism: String,
}

impl PriorPolicy {
    pub fn compiler() -> Self {
        Self {
            target_metric: "l1d_miss_rate".into(),
            direction: Direction::Decrease,
            action_id: "vectorize_enable".into(),
            mechanism: "reduce cache misses via vectorization".into(),
        }
    }

    pub fn train() -> Self {
        Self {
            target_metric: "val_loss".into(),
            direction: Direction::Decrease,
            action_id: "lr_down_2x".into(),
            mechanism: "a smaller learning rate generalizes better".into(),
        }
    }

    /// The action with the best average effect across causes under the
    /// believed table, hypothesized to relieve the cause it addresses.
    pub fn synth(belief: &[Vec<f64>]) -> Self {
        let n_actions = belief.first().map_or(0, Vec::len);
        let means: Vec<f64> = (0..n_actions)
            .map(|a| belief.iter().map(|row| row[a]).sum::<f64>() / belief.len() as f64)
            .collect();
        let action = argmax(&means);
        let cause = crate::domain::synth::addressed_cause(action, belief.len()).unwrap_or(0);
        Self {
            target_metric: crate::domain::synth::indicator_name(cause),
            direction: Direction::Decrease,
            action_id: crate::domain::synth::action_id(action),
            mechanism: format!("action {action} is the reliable general-purpose fix"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PriorAgent {
    policy: PriorPolicy,
}

impl PriorAgent {
    pub fn new(policy: PriorPolicy) -> Self {
        Self { policy }
    }
}

impl Agent for PriorAgent {
    fn id(&self) -> String {
        "scripted:prior".into()
    }

    fn decide(&mut self, request: &AgentRequest) -> Result<AgentDecision, AgentError> {
        let p = &self.policy;
        if request.action(&p.action_id).is_none() {
            return Err(AgentError::Failure(format!("prior action {:?} not offered", p.action_id)));
        }
        Ok(AgentDecision {
            hypothesis: Hypothesis {
                mechanism: p.mechanism.clone(),
                target_metric: p.target_metric.clone(),
                predicted_direction: p.direction,
            },
            action_id: p.action_id.clone(),
            rationale: format!("known heuristic: {}", p.mechanism),
            raw_output: format!("prior: {} {} via {}", p.target_metric, p.direction, p.action_id),
            loop_marker: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ContextWindow;
    use crate::protocol::{ActionSpec, MetricSummary};

    fn snap(values: &[(&str, f64)]) -> MetricSnapshot {
        values.iter().fold(MetricSnapshot::new(1.0, 0), |s, (k, v)| s.with_metric(*k, MetricSummary::single(*v)))
    }

    fn request(current: MetricSnapshot, baseline: MetricSnapshot) -> AgentRequest {
        let ids = ["unroll_4", "interleave_enable", "prefetch_16", "unroll_8", "vectorize_enable"];
        AgentRequest::new(
            "compiler".into(),
            1,
            vec!["wall_time_s".into(), "ipc".into(), "l1d_miss_rate".into(), "branch_miss_rate".into()],
            current,
            ids.iter()
                .map(|id| ActionSpec { id: id.to_string(), category: String::new(), label: id.to_string(), payload: serde_json::Value::Null })
                .collect(),
            vec![],
            ContextWindow { baseline: Some(baseline), iterations: vec![] },
        )
    }

    #[test]
    fn signal_targets_largest_relative_deterioration() {
        let base = snap(&[("wall_time_s", 1.0), ("ipc", 2.0), ("l1d_miss_rate", 0.10), ("branch_miss_rate", 0.01)]);
        // ipc down 10%, miss rate up 50%, wall time up 5%
        let cur = snap(&[("wall_time_s", 1.05), ("ipc", 1.8), ("l1d_miss_rate", 0.15), ("branch_miss_rate", 0.01)]);
        let mut agent = SignalAgent::new(SignalPolicy::compiler());
        let d = agent.decide(&request(cur.clone(), base.clone())).unwrap();
        assert_eq!(d.hypothesis.target_metric, "l1d_miss_rate");
        assert_eq!(d.hypothesis.predicted_direction, Direction::Decrease);
        assert_eq!(d.action_id, "prefetch_16");
        assert_eq!(agent.decide(&request(cur, base)).unwrap(), d);
    }

    #[test]
    fn prior_ignores_observations() {
        let mut agent = PriorAgent::new(PriorPolicy::compiler());
        let a = agent.decide(&request(snap(&[("ipc", 3.0)]), snap(&[("ipc", 1.0)]))).unwrap();
        let b = agent.decide(&request(snap(&[("ipc", 0.1)]), snap(&[("l1d_miss_rate", 0.9)]))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hypothesis.target_metric, "l1d_miss_rate");
        assert_eq!(a.hypothesis.predicted_direction, Direction::Decrease);
        assert_eq!(a.action_id, "vectorize_enable");
    }

    #[test]
    fn synth_policies_follow_belief() {
        // 2 causes, 5 actions: 0,1 good per cause, 2,3 bad per cause, 4 generic
        let belief = vec![vec![0.9, -0.5, -0.8, 0.1, 0.4], vec![-0.3, 0.95, 0.2, -0.7, 0.45]];
        let s = SignalPolicy::synth(&belief);
        assert_eq!(s.action_for["sym_0"], "act_0");
        assert_eq!(s.action_for["sym_1"], "act_1");
        let p = PriorPolicy::synth(&belief);
        assert_eq!(p.action_id, "act_4");
    }
}
