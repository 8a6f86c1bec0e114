//! Hidden-cause environment with a single observability dial.
//!
//! A trial draws a true cause uniformly from `n_causes`. Each observation
//! emits one symbol through a symmetric channel: the true cause with
//! probability `rho`, otherwise one of the other symbols uniformly. Symbols
//! are exposed as one-hot indicator metrics `sym_<j>`.
//!
//! Actions `0..n_causes` are the primary fix for cause `a`, actions
//! `n_causes..2*n_causes` a misguided fix for cause `a - n_causes`, and any
//! further actions are generic. An action that addresses the true cause
//! relieves its symptom in the measurement taken right after it (all
//! indicators read zero); the objective moves by the effect table entry.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{observability_gap, AnalysisError, JointDistribution};
use crate::harness::{Domain, DomainError, Intervention};
use crate::protocol::{ActionSpec, AgentDecision, MetricSnapshot, MetricSummary, ObjectiveSense};

pub const DOMAIN_ID: &str = "synth";
pub const INITIAL_OBJECTIVE: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("effect table csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

pub fn indicator_name(cause: usize) -> String {
    format!("sym_{cause}")
}

pub fn action_id(action: usize) -> String {
    format!("act_{action}")
}

pub fn parse_action_id(id: &str) -> Option<usize> {
    id.strip_prefix("act_")?.parse().ok()
}

/// Cause addressed by `action`, if any.
pub fn addressed_cause(action: usize, n_causes: usize) -> Option<usize> {
    (action < 2 * n_causes).then_some(action % n_causes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_causes: usize,
    pub observability_rho: f64,
    /// `effect_table[cause][action]`: objective change.
    pub effect_table: Vec<Vec<f64>>,
    pub n_actions: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Draws an effect table with the primary / misguided / generic
    /// structure described at module level.
    pub fn generate(n_causes: usize, n_actions: usize, rho: f64, seed: u64) -> Result<Self, SynthError> {
        if n_causes < 2 || n_actions < 2 {
            return Err(SynthError::InvalidSpec("need at least 2 causes and 2 actions".into()));
        }
        let mut rng = SplitMix64::seed_from_u64(seed);
        let effect_table = (0..n_causes)
            .map(|c| {
                (0..n_actions)
                    .map(|a| match addressed_cause(a, n_causes) {
                        Some(t) if t == c && a < n_causes => rng.random_range(0.8..1.0),
                        Some(t) if t == c => -rng.random_range(0.3..0.6),
                        Some(_) => rng.random_range(-0.3..0.1),
                        None => rng.random_range(0.3..0.6),
                    })
                    .collect()
            })
            .collect();
        let spec = Self { n_causes, observability_rho: rho, effect_table, n_actions, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// Default layout: one primary and one misguided fix per cause plus one
    /// generic action.
    pub fn standard(n_causes: usize, rho: f64, seed: u64) -> Result<Self, SynthError> {
        Self::generate(n_causes, 2 * n_causes + 1, rho, seed)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_causes < 2 {
            return bad(format!("n_causes must be >= 2, got {}", self.n_causes));
        }
        if self.n_actions < 2 {
            return bad(format!("n_actions must be >= 2, got {}", self.n_actions));
        }
        if !(0.0..=1.0).contains(&self.observability_rho) {
            return bad(format!("observability_rho must lie in [0,1], got {}", self.observability_rho));
        }
        if self.effect_table.len() != self.n_causes {
            return bad("effect_table must have one row per cause".into());
        }
        for (c, row) in self.effect_table.iter().enumerate() {
            if row.len() != self.n_actions {
                return bad(format!("effect_table row {c} must have {} entries", self.n_actions));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return bad(format!("effect_table row {c} has a non-finite entry"));
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if row.iter().filter(|v| **v == max).count() != 1 {
                return bad(format!("cause {c} has tied best actions"));
            }
        }
        Ok(())
    }

    /// P(symbol = s | cause = c).
    pub fn channel(&self, cause: usize, symbol: usize) -> f64 {
        if symbol == cause {
            self.observability_rho
        } else {
            (1.0 - self.observability_rho) / (self.n_causes - 1) as f64
        }
    }

    /// Joint table over (cause, symbol) under the uniform prior.
    pub fn joint(&self) -> Result<JointDistribution, SynthError> {
        let k = self.n_causes;
        let prior = 1.0 / k as f64;
        let table = (0..k).map(|c| (0..k).map(|s| prior * self.channel(c, s)).collect()).collect();
        let names: Vec<String> = (0..k).map(indicator_name).collect();
        Ok(JointDistribution::new(table, names.clone(), names)?)
    }

    /// Loads `(cause, action, delta)` rows; the header line is optional.
    pub fn load_effect_table_csv(path: &Path) -> Result<Vec<Vec<f64>>, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Csv(format!("{}: {e}", path.display())))?;
        parse_effect_table_csv(&text)
    }

    /// Belief table with the primary and misguided entries swapped for
    /// `round(level * n_causes)` causes picked by `seed`.
    pub fn corrupted_table(&self, level: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut table = self.effect_table.clone();
        let k = self.n_causes;
        let mut causes: Vec<usize> = (0..k).collect();
        let mut rng = SplitMix64::seed_from_u64(seed);
        // Fisher-Yates
        for i in (1..k).rev() {
            let j = rng.random_range(0..=i);
            causes.swap(i, j);
        }
        let n_corrupt = ((level.clamp(0.0, 1.0) * k as f64).round() as usize).min(k);
        for &c in &causes[..n_corrupt] {
            let misguided = k + c;
            if misguided < self.n_actions {
                table[c].swap(c, misguided);
            }
        }
        table
    }
}

pub fn parse_effect_table_csv(text: &str) -> Result<Vec<Vec<f64>>, SynthError> {
    let mut rows: Vec<(usize, usize, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(SynthError::Csv(format!("line {}: expected 3 fields", i + 1)));
        }
        let parsed = (fields[0].parse::<usize>(), fields[1].parse::<usize>(), fields[2].parse::<f64>());
        match parsed {
            (Ok(c), Ok(a), Ok(d)) => rows.push((c, a, d)),
            _ if i == 0 => continue,
            _ => return Err(SynthError::Csv(format!("line {}: cannot parse {line:?}", i + 1))),
        }
    }
    let n_c = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
    let n_a = rows.iter().map(|r| r.1).max().map_or(0, |m| m + 1);
    let mut table = vec![vec![None; n_a]; n_c];
    for (c, a, d) in rows {
        if table[c][a].replace(d).is_some() {
            return Err(SynthError::Csv(format!("duplicate entry for cause {c}, action {a}")));
        }
    }
    table
        .into_iter()
        .enumerate()
        .map(|(c, row)| {
            row.into_iter()
                .enumerate()
                .map(|(a, v)| v.ok_or_else(|| SynthError::Csv(format!("missing entry for cause {c}, action {a}"))))
                .collect()
        })
        .collect()
}

/// `1 - I(O;C)/H(C)` for this channel, exactly.
pub fn true_gap(spec: &SynthSpec) -> Result<f64, SynthError> {
    spec.validate()?;
    Ok(observability_gap(&spec.joint()?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthState {
    pub true_cause: usize,
    pub objective: f64,
    pub step: u32,
}

/// Draws one symbol from the channel.
pub fn draw_symbol(spec: &SynthSpec, state: &SynthState, rng: &mut impl Rng) -> usize {
    let k = spec.n_causes;
    if rng.random::<f64>() < spec.observability_rho {
        state.true_cause
    } else {
        let other = rng.random_range(0..k - 1);
        if other >= state.true_cause {
            other + 1
        } else {
            other
        }
    }
}

fn indicator_snapshot(spec: &SynthSpec, symbol: Option<usize>, objective: f64, captured_at: u64) -> MetricSnapshot {
    (0..spec.n_causes).fold(MetricSnapshot::new(objective, captured_at), |s, j| {
        s.with_metric(indicator_name(j), MetricSummary::single(if Some(j) == symbol { 1.0 } else { 0.0 }))
    })
}

pub fn observe(state: &SynthState, spec: &SynthSpec, rng: &mut impl Rng, captured_at: u64) -> MetricSnapshot {
    let symbol = draw_symbol(spec, state, rng);
    indicator_snapshot(spec, Some(symbol), state.objective, captured_at)
}

pub fn apply(state: &SynthState, action: &str, spec: &SynthSpec) -> Result<SynthState, SynthError> {
    let a = parse_action_id(action)
        .filter(|a| *a < spec.n_actions)
        .ok_or_else(|| SynthError::UnknownAction(action.to_string()))?;
    Ok(SynthState {
        true_cause: state.true_cause,
        objective: state.objective + spec.effect_table[state.true_cause][a],
        step: state.step + 1,
    })
}

pub fn actions(spec: &SynthSpec) -> Vec<ActionSpec> {
    (0..spec.n_actions)
        .map(|a| {
            let (category, label) = match addressed_cause(a, spec.n_causes) {
                Some(c) => ("targeted", format!("intervention {a}: acts on bottleneck {c}")),
                None => ("generic", format!("intervention {a}: general-purpose tuning")),
            };
            ActionSpec {
                id: action_id(a),
                category: category.into(),
                label,
                payload: serde_json::json!({ "index": a }),
            }
        })
        .collect()
}

/// [`Domain`] adapter. The true cause is drawn from the trial seed and never
/// exposed through snapshots.
pub struct SynthDomain {
    spec: SynthSpec,
    state: SynthState,
    rng: SplitMix64,
    clock: u64,
}

impl SynthDomain {
    pub fn new(spec: SynthSpec) -> Result<Self, SynthError> {
        spec.validate()?;
        Ok(Self {
            spec,
            state: SynthState { true_cause: 0, objective: INITIAL_OBJECTIVE, step: 0 },
            rng: SplitMix64::seed_from_u64(0),
            clock: 0,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn state(&self) -> &SynthState {
        &self.state
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }
}

impl Domain for SynthDomain {
    fn id(&self) -> String {
        DOMAIN_ID.into()
    }

    fn metric_names(&self) -> Vec<String> {
        (0..self.spec.n_causes).map(indicator_name).collect()
    }

    fn actions(&self) -> Vec<ActionSpec> {
        actions(&self.spec)
    }

    fn objective_sense(&self) -> ObjectiveSense {
        ObjectiveSense::Maximize
    }

    /// The baseline is the nominal reference reading: no symptom present.
    fn reset(&mut self, seed: u64) -> Result<MetricSnapshot, DomainError> {
        self.rng = SplitMix64::seed_from_u64(seed);
        let true_cause = self.rng.random_range(0..self.spec.n_causes);
        self.state = SynthState { true_cause, objective: INITIAL_OBJECTIVE, step: 0 };
        self.clock = 0;
        Ok(indicator_snapshot(&self.spec, None, INITIAL_OBJECTIVE, 0))
    }

    fn observe(&mut self) -> Result<MetricSnapshot, DomainError> {
        let t = self.tick();
        Ok(observe(&self.state, &self.spec, &mut self.rng, t))
    }

    fn intervene(&mut self, decision: &AgentDecision) -> Result<Intervention, DomainError> {
        let next = apply(&self.state, &decision.action_id, &self.spec).map_err(|e| match e {
            SynthError::UnknownAction(a) => DomainError::UnknownAction(a),
            other => DomainError::Failure(other.to_string()),
        })?;
        let a = parse_action_id(&decision.action_id).expect("validated by apply");
        let relieved = addressed_cause(a, self.spec.n_causes) == Some(self.state.true_cause);
        self.state = next;
        let t = self.tick();
        let post = if relieved {
            indicator_snapshot(&self.spec, None, self.state.objective, t)
        } else {
            observe(&self.state, &self.spec, &mut self.rng, t)
        };
        Ok(Intervention { post, flags: Vec::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::binary_entropy;

    fn spec(k: usize, rho: f64) -> SynthSpec {
        SynthSpec::standard(k, rho, 11).unwrap()
    }

    #[test]
    fn noiseless_channel_reveals_cause() {
        let s = spec(4, 1.0);
        let mut rng = SplitMix64::seed_from_u64(1);
        for cause in 0..4 {
            let st = SynthState { true_cause: cause, objective: 0.0, step: 0 };
            for _ in 0..100 {
                assert_eq!(draw_symbol(&s, &st, &mut rng), cause);
            }
        }
    }

    #[test]
    fn chance_channel_is_uniform_for_every_cause() {
        let s = spec(4, 0.25);
        for c in 0..4 {
            for o in 0..4 {
                assert!((s.channel(c, o) - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn channel_rows_normalized() {
        for rho in [0.0, 0.1, 0.25, 0.6, 0.89, 1.0] {
            let s = spec(5, rho);
            for c in 0..5 {
                let total: f64 = (0..5).map(|o| s.channel(c, o)).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn monte_carlo_fidelity() {
        let s = spec(4, 0.8);
        let st = SynthState { true_cause: 2, objective: 0.0, step: 0 };
        let mut rng = SplitMix64::seed_from_u64(42);
        let hits = (0..10_000).filter(|_| draw_symbol(&s, &st, &mut rng) == 2).count();
        let freq = hits as f64 / 10_000.0;
        assert!((0.78..=0.82).contains(&freq), "freq {freq}");
    }

    #[test]
    fn gap_endpoints_and_binary_case() {
        assert!(true_gap(&spec(4, 1.0)).unwrap().abs() < 1e-9);
        assert!((true_gap(&spec(4, 0.25)).unwrap() - 1.0).abs() < 1e-9);
        let g = true_gap(&spec(2, 0.89)).unwrap();
        // closed form for the binary symmetric channel
        let oracle = 1.0 - (1.0 - binary_entropy(0.11));
        assert!((g - oracle).abs() < 1e-12);
        assert!((g - 0.5).abs() <= 0.01);
    }

    #[test]
    fn gap_nonincreasing_in_rho() {
        for k in [2usize, 3, 4, 7] {
            let lo = 1.0 / k as f64;
            let mut prev = f64::INFINITY;
            for i in 0..=100 {
                let rho = lo + (1.0 - lo) * i as f64 / 100.0;
                let g = true_gap(&spec(k, rho)).unwrap();
                assert!(g <= prev + 1e-12, "k={k} rho={rho}");
                prev = g;
            }
        }
    }

    #[test]
    fn effect_table_structure_and_no_ties() {
        let s = spec(4, 0.5);
        assert_eq!(s.n_actions, 9);
        for c in 0..4 {
            let row = &s.effect_table[c];
            let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(best, c);
            assert!(row[4 + c] < 0.0);
            assert!(row[8] > 0.0);
        }
        let mut tied = s.clone();
        tied.effect_table[0][1] = tied.effect_table[0][0];
        assert!(tied.validate().is_err());
        let mut one = s.clone();
        one.n_causes = 1;
        assert!(one.validate().is_err());
    }

    #[test]
    fn corruption_swaps_primary_and_misguided() {
        let s = spec(4, 1.0);
        let full = s.corrupted_table(1.0, 3);
        for c in 0..4 {
            assert_eq!(full[c][c], s.effect_table[c][4 + c]);
            assert_eq!(full[c][4 + c], s.effect_table[c][c]);
        }
        assert_eq!(s.corrupted_table(0.0, 3), s.effect_table);
        let half = s.corrupted_table(0.5, 3);
        let swapped = (0..4).filter(|&c| half[c][c] != s.effect_table[c][c]).count();
        assert_eq!(swapped, 2);
    }

    #[test]
    fn apply_adds_effect_and_steps() {
        let s = spec(3, 1.0);
        let st = SynthState { true_cause: 1, objective: 10.0, step: 0 };
        let next = apply(&st, "act_4", &s).unwrap();
        assert_eq!(next.objective, 10.0 + s.effect_table[1][4]);
        assert_eq!(next.step, 1);
        assert!(matches!(apply(&st, "act_99", &s), Err(SynthError::UnknownAction(_))));
        assert!(matches!(apply(&st, "nope", &s), Err(SynthError::UnknownAction(_))));
    }

    #[test]
    fn csv_effect_table() {
        let t = parse_effect_table_csv("cause,action,delta\n0,0,1.0\n0,1,-0.5\n1,0,0.25\n1,1,0.75\n").unwrap();
        assert_eq!(t, vec![vec![1.0, -0.5], vec![0.25, 0.75]]);
        assert!(parse_effect_table_csv("0,0,1.0\n1,1,0.5\n").is_err());
        assert!(parse_effect_table_csv("0,0,1.0\n0,0,2.0\n").is_err());
    }
}
