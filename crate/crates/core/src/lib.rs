//! Closed-loop harness for measuring whether an agent's metric-level
//! hypotheses are grounded in what actually moved, separately from whether
//! its actions improved the objective.

pub mod agent;
pub mod analysis;
pub mod domain;
pub mod harness;
pub mod protocol;
pub mod record;

pub use harness::{run_trial, Domain, DomainError, HarnessError, Intervention};
pub use protocol::*;
