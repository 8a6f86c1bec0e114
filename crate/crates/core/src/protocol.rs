//! Types exchanged between the loop runner, domains, agents and scorers.
//!
//! Everything here is plain data with serde derives; the on-disk field names
//! are the Rust field names.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Sentinel used in place of non-finite measurements (diverged training,
/// failed counters). Serialized records never carry NaN or infinity.
pub const NON_FINITE_SENTINEL: f64 = f64::MAX;

/// Per-metric statistics over the repetitions of one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub n_reps: u32,
}

impl MetricSummary {
    /// A single-shot reading: mean = median = value, zero spread.
    pub fn single(value: f64) -> Self {
        let value = finite_or_sentinel(value);
        Self { mean: value, median: value, std: 0.0, n_reps: 1 }
    }

    /// Summarizes repeated samples. Returns `None` for an empty slice.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        // population std over the repetitions
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean: finite_or_sentinel(mean),
            median: finite_or_sentinel(median(samples)),
            std: finite_or_sentinel(var.sqrt()),
            n_reps: samples.len() as u32,
        })
    }
}

pub(crate) fn finite_or_sentinel(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else if v < 0.0 {
        -NON_FINITE_SENTINEL
    } else {
        NON_FINITE_SENTINEL
    }
}

pub(crate) fn median(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Metrics observed at one loop step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    pub metrics: BTreeMap<String, MetricSummary>,
    pub objective_value: f64,
    /// Monotonic logical clock: the measurement sequence number within a trial.
    pub captured_at: u64,
}

impl MetricSnapshot {
    pub fn new(objective_value: f64, captured_at: u64) -> Self {
        Self {
            metrics: BTreeMap::new(),
            objective_value: finite_or_sentinel(objective_value),
            captured_at,
        }
    }

    pub fn with_metric(mut self, name: impl Into<String>, summary: MetricSummary) -> Self {
        self.metrics.insert(name.into(), summary);
        self
    }

    pub fn median(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.median)
    }

    pub fn is_finite(&self) -> bool {
        self.objective_value.is_finite()
            && self
                .metrics
                .values()
                .all(|m| m.mean.is_finite() && m.median.is_finite() && m.std.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub id: String,
    pub category: String,
    pub label: String,
    #[serde(default)]
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
}

impl Direction {
    pub fn opposite(self) -> Self {
        match self {
            Direction::Increase => Direction::Decrease,
            Direction::Decrease => Direction::Increase,
        }
    }

    /// +1 for increase, -1 for decrease.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Increase => 1.0,
            Direction::Decrease => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub mechanism: String,
    pub target_metric: String,
    pub predicted_direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDecision {
    pub hypothesis: Hypothesis,
    pub action_id: String,
    pub rationale: String,
    /// Verbatim agent response.
    pub raw_output: String,
    /// Optional intervention site (compiler loop marker). Domains without
    /// sites ignore it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_marker: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParadoxClass {
    TypeA,
    TypeB,
    AlignedSuccess,
    AlignedFailure,
}

impl ParadoxClass {
    pub const ALL: [ParadoxClass; 4] = [
        ParadoxClass::TypeA,
        ParadoxClass::TypeB,
        ParadoxClass::AlignedSuccess,
        ParadoxClass::AlignedFailure,
    ];

    pub fn classify(action_success: bool, abductive_success: bool) -> Self {
        match (action_success, abductive_success) {
            (true, false) => ParadoxClass::TypeA,
            (false, true) => ParadoxClass::TypeB,
            (true, true) => ParadoxClass::AlignedSuccess,
            (false, false) => ParadoxClass::AlignedFailure,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParadoxClass::TypeA => "TypeA",
            ParadoxClass::TypeB => "TypeB",
            ParadoxClass::AlignedSuccess => "AlignedSuccess",
            ParadoxClass::AlignedFailure => "AlignedFailure",
        }
    }
}

/// Something noteworthy that happened while producing or scoring an iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IterationFlag {
    /// The domain could not apply or measure the intervention; post = pre.
    DomainFailure { message: String },
    /// The hypothesis named a metric absent from one of the snapshots.
    MissingMetric { metric: String },
    /// The action produced an out-of-range setting that was clamped.
    Clamped { detail: String },
    /// Training diverged under this configuration.
    Diverged,
    /// Any other domain warning (e.g. a replaced pragma).
    Warning { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub pre: MetricSnapshot,
    pub decision: AgentDecision,
    pub post: MetricSnapshot,
    pub objective_delta: f64,
    pub action_success: bool,
    pub abductive_success: bool,
    pub paradox_class: ParadoxClass,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<IterationFlag>,
}

impl IterationRecord {
    pub fn has_missing_metric(&self) -> bool {
        self.flags.iter().any(|f| matches!(f, IterationFlag::MissingMetric { .. }))
    }

    pub fn is_domain_failure(&self) -> bool {
        self.flags.iter().any(|f| matches!(f, IterationFlag::DomainFailure { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveSense {
    Maximize,
    Minimize,
}

impl fmt::Display for ObjectiveSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveSense::Maximize => "maximize",
            ObjectiveSense::Minimize => "minimize",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub n_iterations: u32,
    pub history_window_k: u32,
    pub noise_epsilon_rel: f64,
    pub seed: u64,
    pub objective_sense: ObjectiveSense,
    /// Whether the agent sees the baseline snapshot in every request or only
    /// at iteration 0.
    #[serde(default = "default_true")]
    pub baseline_always_visible: bool,
}

fn default_true() -> bool {
    true
}

impl LoopConfig {
    pub const DEFAULT_ITERATIONS: u32 = 10;
    pub const DEFAULT_WINDOW: u32 = 5;
    pub const DEFAULT_EPSILON: f64 = 0.005;

    pub fn new(objective_sense: ObjectiveSense, seed: u64) -> Self {
        Self {
            n_iterations: Self::DEFAULT_ITERATIONS,
            history_window_k: Self::DEFAULT_WINDOW,
            noise_epsilon_rel: Self::DEFAULT_EPSILON,
            seed,
            objective_sense,
            baseline_always_visible: true,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_iterations == 0 {
            return Err("n_iterations must be a positive integer".into());
        }
        if self.history_window_k == 0 {
            return Err("history_window_k must be at least 1".into());
        }
        if !(self.noise_epsilon_rel > 0.0 && self.noise_epsilon_rel < 1.0) {
            return Err(format!(
                "noise_epsilon_rel must lie in (0, 1), got {}",
                self.noise_epsilon_rel
            ));
        }
        Ok(())
    }
}

/// Why a trial stopped before `n_iterations`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub at_iteration: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub domain_id: String,
    pub agent_id: String,
    pub config: LoopConfig,
    pub iterations: Vec<IterationRecord>,
    pub baseline: MetricSnapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<Truncation>,
    /// Domain diagnostics collected during the trial (compiler stderr,
    /// measurement degradations).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub log: Vec<String>,
}

impl TrialRecord {
    pub fn class_counts(&self) -> BTreeMap<ParadoxClass, usize> {
        let mut counts: BTreeMap<ParadoxClass, usize> =
            ParadoxClass::ALL.iter().map(|c| (*c, 0)).collect();
        for it in &self.iterations {
            *counts.entry(it.paradox_class).or_default() += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_is_total() {
        assert_eq!(ParadoxClass::classify(true, false), ParadoxClass::TypeA);
        assert_eq!(ParadoxClass::classify(false, true), ParadoxClass::TypeB);
        assert_eq!(ParadoxClass::classify(true, true), ParadoxClass::AlignedSuccess);
        assert_eq!(ParadoxClass::classify(false, false), ParadoxClass::AlignedFailure);
    }

    #[test]
    fn summary_from_samples() {
        let s = MetricSummary::from_samples(&[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.n_reps, 4);
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
        assert!(MetricSummary::from_samples(&[]).is_none());
    }

    #[test]
    fn non_finite_becomes_sentinel() {
        assert_eq!(MetricSummary::single(f64::NAN).median, NON_FINITE_SENTINEL);
        assert_eq!(MetricSummary::single(f64::NEG_INFINITY).median, -NON_FINITE_SENTINEL);
        assert_eq!(MetricSnapshot::new(f64::INFINITY, 0).objective_value, NON_FINITE_SENTINEL);
    }

    #[test]
    fn loop_config_validation() {
        let mut cfg = LoopConfig::new(ObjectiveSense::Maximize, 1);
        assert!(cfg.validate().is_ok());
        cfg.n_iterations = 0;
        assert!(cfg.validate().is_err());
        cfg.n_iterations = 3;
        cfg.history_window_k = 0;
        assert!(cfg.validate().is_err());
        cfg.history_window_k = 3;
        cfg.noise_epsilon_rel = 0.0;
        assert!(cfg.validate().is_err());
    }
}
