use std::collections::VecDeque;

use super::{Agent, AgentError, AgentRequest};
use crate::protocol::{AgentDecision, TrialRecord};

/// Emits the decisions of recorded trials in order.
#[derive(Debug, Clone)]
pub struct ReplayAgent {
    agent_id: String,
    queue: VecDeque<AgentDecision>,
    served: usize,
}

impl ReplayAgent {
    /// Replays every iteration of `trials`, in file order. The agent reports
    /// the recorded agent id so a replayed trial matches the original.
    pub fn from_trials(trials: &[TrialRecord]) -> Self {
        let agent_id = trials.first().map_or_else(|| "replay".to_string(), |t| t.agent_id.clone());
        let queue = trials
            .iter()
            .flat_map(|t| t.iterations.iter().map(|it| it.decision.clone()))
            .collect();
        Self { agent_id, queue, served: 0 }
    }

    pub fn from_decisions(agent_id: impl Into<String>, decisions: Vec<AgentDecision>) -> Self {
        Self { agent_id: agent_id.into(), queue: decisions.into(), served: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.queue.len()
    }
}

impl Agent for ReplayAgent {
    fn id(&self) -> String {
        self.agent_id.clone()
    }

    fn decide(&mut self, _request: &AgentRequest) -> Result<AgentDecision, AgentError> {
        let d = self.queue.pop_front().ok_or(AgentError::Exhausted(self.served))?;
        self.served += 1;
        Ok(d)
    }
}
