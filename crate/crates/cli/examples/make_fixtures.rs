//! Regenerates the replay fixtures in `fixtures/`.
//!
//! ```text
//! cargo run -p mrl-cli --example make_fixtures -- fixtures
//! mrl report 'fixtures/*.jsonl' --out fixtures
//! ```
//!
//! Each trial is written by hand and then passed through the harness once
//! (recorded domain plus replay agent), so scores and flags are the
//! harness's own.

use std::path::PathBuf;

use mrl_core::agent::ReplayAgent;
use mrl_core::domain::RecordedDomain;
use mrl_core::record::write_trial_file;
use mrl_core::{
    run_trial, AgentDecision, Direction, Hypothesis, IterationRecord, LoopConfig, MetricSnapshot, MetricSummary,
    ObjectiveSense, ParadoxClass, TrialRecord,
};

fn summary(median: f64, std: f64, n_reps: u32) -> MetricSummary {
    MetricSummary { mean: median, median, std, n_reps }
}

fn decision(mechanism: &str, target: &str, dir: Direction, action: &str, marker: Option<&str>) -> AgentDecision {
    AgentDecision {
        hypothesis: Hypothesis { mechanism: mechanism.into(), target_metric: target.into(), predicted_direction: dir },
        action_id: action.into(),
        rationale: mechanism.into(),
        raw_output: String::new(),
        loop_marker: marker.map(str::to_string),
    }
}

/// A one-iteration trial skeleton; the harness fills in the scores.
fn skeleton(domain: &str, agent: &str, sense: ObjectiveSense, pre: MetricSnapshot, d: AgentDecision, post: MetricSnapshot) -> TrialRecord {
    TrialRecord {
        domain_id: domain.into(),
        agent_id: agent.into(),
        config: LoopConfig { n_iterations: 1, ..LoopConfig::new(sense, 0) },
        baseline: pre.clone(),
        iterations: vec![IterationRecord {
            index: 0,
            pre,
            decision: d,
            post,
            objective_delta: 0.0,
            action_success: false,
            abductive_success: false,
            paradox_class: ParadoxClass::AlignedFailure,
            flags: vec![],
        }],
        truncated: None,
        log: vec![],
    }
}

/// Vectorizing the jacobi stencil sped it up by 1.27% while the predicted
/// L1D miss-rate drop did not happen.
fn jacobi() -> TrialRecord {
    let base_wall = 0.0213;
    let pre = MetricSnapshot::new(1.0, 0)
        .with_metric("wall_time_s", summary(base_wall, 0.00012, 20))
        .with_metric("ipc", summary(1.91, 0.0, 20))
        .with_metric("l1d_miss_rate", summary(0.2217, 0.0, 20))
        .with_metric("branch_miss_rate", summary(0.0031, 0.0, 20));
    let post = MetricSnapshot::new(1.0127, 2)
        .with_metric("wall_time_s", summary(base_wall / 1.0127, 0.00011, 20))
        .with_metric("ipc", summary(1.94, 0.0, 20))
        .with_metric("l1d_miss_rate", summary(0.2218, 0.0, 20))
        .with_metric("branch_miss_rate", summary(0.0031, 0.0, 20));
    let d = decision(
        "strided neighbour loads miss in L1; vector loads should fetch whole lines",
        "l1d_miss_rate",
        Direction::Decrease,
        "vectorize_enable",
        Some("L1"),
    );
    let mut t = skeleton("compiler", "scripted:prior", ObjectiveSense::Maximize, pre, d, post);
    t.log.push("kernel=jacobi2d".into());
    t
}

/// Clipping lowered the gradient norm as predicted but validation loss
/// rose from 0.77 to 1.17.
fn hpo() -> TrialRecord {
    let snap = |val_loss: f64, grad_max: f64, grad_mean: f64, acc: f64, t: u64| {
        MetricSnapshot::new(val_loss, t)
            .with_metric("train_loss", MetricSummary::single(val_loss * 0.9))
            .with_metric("val_loss", MetricSummary::single(val_loss))
            .with_metric("val_accuracy", MetricSummary::single(acc))
            .with_metric("grad_norm_mean", MetricSummary::single(grad_mean))
            .with_metric("grad_norm_max", MetricSummary::single(grad_max))
            .with_metric("loss_variance", MetricSummary::single(0.004))
            .with_metric("convergence_rate", MetricSummary::single(0.01))
    };
    let d = decision(
        "gradient spikes destabilize training; clipping should bound the norm",
        "grad_norm_max",
        Direction::Decrease,
        "clip_on_1.0",
        None,
    );
    skeleton("train", "scripted:signal", ObjectiveSense::Minimize, snap(0.77, 4.2, 1.6, 0.71, 0), d, snap(1.17, 0.98, 0.74, 0.58, 2))
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir).expect("create fixture dir");
    for (name, trial) in [("jacobi_type_a", jacobi()), ("hpo_type_b", hpo())] {
        let config = trial.config.clone();
        let mut agent = ReplayAgent::from_trials(std::slice::from_ref(&trial));
        let mut domain = RecordedDomain::new(trial);
        let scored = run_trial(&mut domain, &mut agent, &config).expect("replay");
        let path = dir.join(format!("{name}.jsonl"));
        write_trial_file(&path, &scored).expect("write fixture");
        println!("{} {:?}", path.display(), scored.iterations[0].paradox_class);
    }
}
