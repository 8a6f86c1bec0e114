//! Scoring of iterations and trials, the rank-sum/bootstrap battery, and
//! information measures on finite joint tables.

mod info;
mod report;
mod scoring;
mod stats;

use thiserror::Error;

pub use info::{binary_entropy, entropy, mutual_information, observability_gap, JointDistribution};
pub use report::{domain_comparison, per_trial_rows, render_summary_markdown, trial_rows_csv, DomainComparison, TrialRow};
pub use scoring::{
    abductive_success, action_success, asr_sensitivity, exclude_missing_metric, gap_pp,
    improving_direction, rescore_trial, score_iteration, summarize, summarize_macro,
    IterationScore, MacroRates, ScoreSummary,
};
pub use stats::{bootstrap_ci, mann_whitney_u, Interval, MannWhitney, EXACT_MAX_PRODUCT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("metric {0:?} missing from snapshot")]
    MissingMetric(String),
    #[error("cause entropy is zero")]
    DegenerateEntropy,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
