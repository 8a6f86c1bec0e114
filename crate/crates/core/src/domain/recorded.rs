use crate::harness::{Domain, DomainError, Intervention};
use crate::protocol::{ActionSpec, AgentDecision, IterationFlag, MetricSnapshot, ObjectiveSense, TrialRecord};

/// Plays back the measurements of a recorded trial: `observe` returns each
/// iteration's recorded `pre` and `intervene` its recorded `post`. Paired
/// with a replay agent this re-scores a trial offline without touching a
/// compiler or trainer.
pub struct RecordedDomain {
    trial: TrialRecord,
    actions: Vec<ActionSpec>,
    metric_names: Vec<String>,
    next: usize,
}

impl RecordedDomain {
    pub fn new(trial: TrialRecord) -> Self {
        let actions = match trial.domain_id.as_str() {
            super::compiler::DOMAIN_ID => super::compiler::list_actions(),
            super::train::DOMAIN_ID => super::train::list_actions(),
            _ => {
                let mut ids: Vec<String> = trial.iterations.iter().map(|it| it.decision.action_id.clone()).collect();
                ids.sort();
                ids.dedup();
                ids.into_iter()
                    .map(|id| ActionSpec { label: id.clone(), id, category: "recorded".into(), payload: serde_json::Value::Null })
                    .collect()
            }
        };
        let mut metric_names: Vec<String> = trial.baseline.metrics.keys().cloned().collect();
        for it in &trial.iterations {
            for name in it.pre.metrics.keys().chain(it.post.metrics.keys()) {
                if !metric_names.contains(name) {
                    metric_names.push(name.clone());
                }
            }
            if !metric_names.contains(&it.decision.hypothesis.target_metric) {
                metric_names.push(it.decision.hypothesis.target_metric.clone());
            }
        }
        Self { trial, actions, metric_names, next: 0 }
    }

    pub fn len(&self) -> usize {
        self.trial.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trial.iterations.is_empty()
    }
}

impl Domain for RecordedDomain {
    fn id(&self) -> String {
        self.trial.domain_id.clone()
    }

    fn metric_names(&self) -> Vec<String> {
        self.metric_names.clone()
    }

    fn actions(&self) -> Vec<ActionSpec> {
        self.actions.clone()
    }

    fn objective_sense(&self) -> ObjectiveSense {
        self.trial.config.objective_sense
    }

    fn sites(&self) -> Vec<String> {
        let mut sites: Vec<String> = self.trial.iterations.iter().filter_map(|it| it.decision.loop_marker.clone()).collect();
        sites.sort();
        sites.dedup();
        sites
    }

    fn reset(&mut self, _seed: u64) -> Result<MetricSnapshot, DomainError> {
        self.next = 0;
        Ok(self.trial.baseline.clone())
    }

    fn observe(&mut self) -> Result<MetricSnapshot, DomainError> {
        self.trial
            .iterations
            .get(self.next)
            .map(|it| it.pre.clone())
            .ok_or_else(|| DomainError::Failure(format!("recording has only {} iterations", self.len())))
    }

    fn intervene(&mut self, decision: &AgentDecision) -> Result<Intervention, DomainError> {
        let it = self
            .trial
            .iterations
            .get(self.next)
            .ok_or_else(|| DomainError::Failure(format!("recording has only {} iterations", self.len())))?;
        if it.decision.action_id != decision.action_id {
            return Err(DomainError::Failure(format!(
                "iteration {} was recorded with action {:?}, not {:?}",
                it.index, it.decision.action_id, decision.action_id
            )));
        }
        if let Some(IterationFlag::DomainFailure { message }) =
            it.flags.iter().find(|f| matches!(f, IterationFlag::DomainFailure { .. }))
        {
            let message = message.clone();
            self.next += 1;
            return Err(DomainError::Failure(message));
        }
        // scoring flags are recomputed by the loop; keep only domain-side ones
        let flags = it
            .flags
            .iter()
            .filter(|f| matches!(f, IterationFlag::Clamped { .. } | IterationFlag::Diverged | IterationFlag::Warning { .. }))
            .cloned()
            .collect();
        let post = it.post.clone();
        self.next += 1;
        Ok(Intervention { post, flags })
    }
}
