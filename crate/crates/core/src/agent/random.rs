use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::{Agent, AgentError, AgentRequest};
use crate::protocol::{AgentDecision, Direction, Hypothesis};

/// Uniformly random metric, direction and action; a chance-level reference.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: SplitMix64,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self { rng: SplitMix64::seed_from_u64(seed) }
    }
}

impl Agent for RandomAgent {
    fn id(&self) -> String {
        "random".into()
    }

    fn decide(&mut self, request: &AgentRequest) -> Result<AgentDecision, AgentError> {
        if request.actions.is_empty() || request.metric_names.is_empty() {
            return Err(AgentError::Failure("empty action roster or metric list".into()));
        }
        let action = &request.actions[self.rng.random_range(0..request.actions.len())];
        let metric = &request.metric_names[self.rng.random_range(0..request.metric_names.len())];
        let direction = if self.rng.random_bool(0.5) { Direction::Increase } else { Direction::Decrease };
        Ok(AgentDecision {
            hypothesis: Hypothesis {
                mechanism: "random guess".into(),
                target_metric: metric.clone(),
                predicted_direction: direction,
            },
            action_id: action.id.clone(),
            rationale: "uniform random choice".into(),
            raw_output: format!("random: {metric} {direction} via {}", action.id),
            loop_marker: None,
        })
    }
}
