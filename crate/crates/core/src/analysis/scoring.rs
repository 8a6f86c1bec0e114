//! Per-iteration success predicates and pooled rates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::protocol::{
    AgentDecision, Direction, Hypothesis, IterationFlag, MetricSnapshot, ObjectiveSense,
    ParadoxClass, TrialRecord,
};

/// True iff the objective improved in `sense` by more than `eps * |pre|`.
pub fn action_success(pre: &MetricSnapshot, post: &MetricSnapshot, sense: ObjectiveSense, eps: f64) -> bool {
    let gain = match sense {
        ObjectiveSense::Maximize => post.objective_value - pre.objective_value,
        ObjectiveSense::Minimize => pre.objective_value - post.objective_value,
    };
    gain > eps * pre.objective_value.abs()
}

/// True iff the target metric's median moved in the predicted direction by
/// more than `eps * |pre|`, or by more than `eps` when the pre value is zero.
pub fn abductive_success(
    hypothesis: &Hypothesis,
    pre: &MetricSnapshot,
    post: &MetricSnapshot,
    eps: f64,
) -> Result<bool, AnalysisError> {
    let metric = &hypothesis.target_metric;
    let missing = || AnalysisError::MissingMetric(metric.clone());
    let before = pre.median(metric).ok_or_else(missing)?;
    let after = post.median(metric).ok_or_else(missing)?;
    let moved = hypothesis.predicted_direction.sign() * (after - before);
    let threshold = if before == 0.0 { eps } else { eps * before.abs() };
    Ok(moved > threshold)
}

/// Scored outcome of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationScore {
    pub action_success: bool,
    pub abductive_success: bool,
    pub paradox_class: ParadoxClass,
    pub flags: Vec<IterationFlag>,
}

pub fn score_iteration(
    decision: &AgentDecision,
    pre: &MetricSnapshot,
    post: &MetricSnapshot,
    sense: ObjectiveSense,
    eps: f64,
) -> IterationScore {
    let act = action_success(pre, post, sense, eps);
    let mut flags = Vec::new();
    let abd = match abductive_success(&decision.hypothesis, pre, post, eps) {
        Ok(v) => v,
        Err(_) => {
            flags.push(IterationFlag::MissingMetric {
                metric: decision.hypothesis.target_metric.clone(),
            });
            false
        }
    };
    IterationScore {
        action_success: act,
        abductive_success: abd,
        paradox_class: ParadoxClass::classify(act, abd),
        flags,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub actsr: f64,
    pub asr: f64,
    pub gap_pp: f64,
    pub class_counts: BTreeMap<ParadoxClass, usize>,
    pub n_iterations: usize,
}

impl ScoreSummary {
    /// Builds the summary from class counts. Rates are computed from integer
    /// counts so the identities with the counts hold exactly.
    pub fn from_counts(class_counts: BTreeMap<ParadoxClass, usize>) -> Result<Self, AnalysisError> {
        let get = |c| class_counts.get(&c).copied().unwrap_or(0);
        let n = ParadoxClass::ALL.iter().map(|c| get(*c)).sum::<usize>();
        if n == 0 {
            return Err(AnalysisError::EmptyInput("no scored iterations".into()));
        }
        let acted = get(ParadoxClass::TypeA) + get(ParadoxClass::AlignedSuccess);
        let grounded = get(ParadoxClass::TypeB) + get(ParadoxClass::AlignedSuccess);
        let nf = n as f64;
        let mut class_counts = class_counts;
        for c in ParadoxClass::ALL {
            class_counts.entry(c).or_insert(0);
        }
        Ok(Self {
            actsr: acted as f64 / nf,
            asr: grounded as f64 / nf,
            gap_pp: 100.0 * (acted as f64 - grounded as f64) / nf,
            class_counts,
            n_iterations: n,
        })
    }

    pub fn count(&self, class: ParadoxClass) -> usize {
        self.class_counts.get(&class).copied().unwrap_or(0)
    }
}

/// Pooled rates over every iteration of every trial.
pub fn summarize(trials: &[TrialRecord]) -> Result<ScoreSummary, AnalysisError> {
    if trials.is_empty() {
        return Err(AnalysisError::EmptyInput("no trials".into()));
    }
    let mut counts: BTreeMap<ParadoxClass, usize> = BTreeMap::new();
    for t in trials {
        for (c, n) in t.class_counts() {
            *counts.entry(c).or_default() += n;
        }
    }
    ScoreSummary::from_counts(counts)
}

/// Unweighted mean of per-trial rates (trials with no iterations skipped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroRates {
    pub actsr: f64,
    pub asr: f64,
    pub gap_pp: f64,
    pub n_trials: usize,
}

pub fn summarize_macro(trials: &[TrialRecord]) -> Result<MacroRates, AnalysisError> {
    let per: Vec<ScoreSummary> = trials
        .iter()
        .filter(|t| !t.iterations.is_empty())
        .map(|t| summarize(std::slice::from_ref(t)))
        .collect::<Result<_, _>>()?;
    if per.is_empty() {
        return Err(AnalysisError::EmptyInput("no trials with iterations".into()));
    }
    let n = per.len() as f64;
    Ok(MacroRates {
        actsr: per.iter().map(|s| s.actsr).sum::<f64>() / n,
        asr: per.iter().map(|s| s.asr).sum::<f64>() / n,
        gap_pp: per.iter().map(|s| s.gap_pp).sum::<f64>() / n,
        n_trials: per.len(),
    })
}

/// Drops iterations whose abductive score was forced false by a missing
/// metric (counter fallback mode).
pub fn exclude_missing_metric(trials: &[TrialRecord]) -> Vec<TrialRecord> {
    trials
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.iterations.retain(|it| !it.has_missing_metric());
            t
        })
        .collect()
}

/// Re-scores every iteration of `trial` from its stored snapshots.
pub fn rescore_trial(trial: &TrialRecord, eps: f64) -> TrialRecord {
    let mut out = trial.clone();
    for it in &mut out.iterations {
        let s = score_iteration(&it.decision, &it.pre, &it.post, trial.config.objective_sense, eps);
        it.action_success = s.action_success;
        it.abductive_success = s.abductive_success;
        it.paradox_class = s.paradox_class;
        it.flags.retain(|f| !matches!(f, IterationFlag::MissingMetric { .. }));
        it.flags.extend(s.flags);
    }
    out.config.noise_epsilon_rel = eps;
    out
}

/// ASR recomputed at each threshold in `eps_list`.
pub fn asr_sensitivity(trials: &[TrialRecord], eps_list: &[f64]) -> Vec<(f64, f64)> {
    let all: Vec<_> = trials.iter().flat_map(|t| t.iterations.iter()).collect();
    eps_list
        .iter()
        .map(|&eps| {
            if all.is_empty() {
                return (eps, 0.0);
            }
            let hits = all
                .iter()
                .filter(|it| abductive_success(&it.decision.hypothesis, &it.pre, &it.post, eps).unwrap_or(false))
                .count();
            (eps, hits as f64 / all.len() as f64)
        })
        .collect()
}

/// Gap in percentage points from two rates.
pub fn gap_pp(actsr: f64, asr: f64) -> f64 {
    100.0 * (actsr - asr)
}

/// Direction that counts as improvement for an objective.
pub fn improving_direction(sense: ObjectiveSense) -> Direction {
    match sense {
        ObjectiveSense::Maximize => Direction::Increase,
        ObjectiveSense::Minimize => Direction::Decrease,
    }
}
