//! Hyperparameter tuning of a small from-scratch MLP on a synthetic
//! two-class problem. Validation loss is the objective (minimized).

pub mod data;
pub mod mlp;
pub mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use data::{generate_dataset, Dataset, SplitDataset, N_CLASSES, N_FEATURES};
pub use mlp::{Dropout, Mlp};
pub use optim::{clip_gradient, l2_norm, scheduled_lr, LrSchedule, Optimizer, OptimizerKind};

use crate::harness::{Domain, DomainError, Intervention};
use crate::protocol::{
    finite_or_sentinel, ActionSpec, AgentDecision, IterationFlag, MetricSnapshot, MetricSummary, ObjectiveSense,
    NON_FINITE_SENTINEL,
};

pub const DOMAIN_ID: &str = "train";
pub const HIDDEN: [usize; 2] = [64, 32];
pub const CONVERGENCE_WINDOW: usize = 3;
/// A mean minibatch loss above this counts as divergence even while finite.
/// Chance level for two classes is ln 2 ≈ 0.69.
pub const DIVERGENCE_LOSS: f64 = 1e3;

pub const LR_BOUNDS: (f64, f64) = (1e-6, 10.0);
pub const BATCH_BOUNDS: (usize, usize) = (1, 1024);
pub const DROPOUT_BOUNDS: (f64, f64) = (0.0, 0.9);
pub const WEIGHT_DECAY_BOUNDS: (f64, f64) = (0.0, 1.0);
pub const WEIGHT_DECAY_ENABLE: f64 = 1e-4;
pub const SGD_MOMENTUM: f64 = 0.9;

pub const METRIC_NAMES: [&str; 7] = [
    "train_loss",
    "val_loss",
    "val_accuracy",
    "grad_norm_mean",
    "grad_norm_max",
    "loss_variance",
    "convergence_rate",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout_p: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    /// Heavy-ball momentum; only SGD uses it.
    pub momentum: f64,
    pub grad_clip: Option<f64>,
    pub lr_schedule: LrSchedule,
    pub epochs_per_iteration: usize,
    pub init_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            dropout_p: 0.0,
            weight_decay: 0.0,
            optimizer: OptimizerKind::Adam,
            momentum: 0.0,
            grad_clip: None,
            lr_schedule: LrSchedule::Constant,
            epochs_per_iteration: 10,
            init_seed: 0,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted (it freezes the model) so that the
    /// trainer can be checked against the no-update case.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p must be in [0,1), got {}", self.dropout_p));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be finite and >= 0, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0,1), got {}", self.momentum));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("grad_clip must be positive, got {c}"));
            }
        }
        if self.epochs_per_iteration == 0 {
            return bad("epochs_per_iteration must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub grad_norm_mean: f64,
    pub grad_norm_max: f64,
    pub loss_variance: f64,
    pub convergence_rate: f64,
    pub diverged: bool,
}

impl TrainMetrics {
    fn diverged(grad_norms: &[f64]) -> Self {
        let (mean, max) = norm_stats(grad_norms);
        Self {
            train_loss: NON_FINITE_SENTINEL,
            val_loss: NON_FINITE_SENTINEL,
            val_accuracy: 0.0,
            grad_norm_mean: finite_or_sentinel(mean),
            grad_norm_max: finite_or_sentinel(max),
            loss_variance: NON_FINITE_SENTINEL,
            convergence_rate: 0.0,
            diverged: true,
        }
    }

    pub fn snapshot(&self, captured_at: u64) -> MetricSnapshot {
        let values = [
            self.train_loss,
            self.val_loss,
            self.val_accuracy,
            self.grad_norm_mean,
            self.grad_norm_max,
            self.loss_variance,
            self.convergence_rate,
        ];
        METRIC_NAMES
            .iter()
            .zip(values)
            .fold(MetricSnapshot::new(finite_or_sentinel(self.val_loss), captured_at), |s, (name, v)| {
                s.with_metric(*name, MetricSummary::single(v))
            })
    }
}

fn norm_stats(norms: &[f64]) -> (f64, f64) {
    if norms.is_empty() {
        return (0.0, 0.0);
    }
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let max = norms.iter().copied().fold(0.0, f64::max);
    // guard the invariant max >= mean against rounding in the sum
    (mean.min(max), max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub metrics: TrainMetrics,
    /// Mean minibatch loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
}

/// A model plus optimizer state; [`Trainer::run`] trains one segment of
/// `epochs_per_iteration` epochs under the current config.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Mlp,
    optimizer: Optimizer,
    rng: SplitMix64,
    config: TrainConfig,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let dims = [N_FEATURES, HIDDEN[0], HIDDEN[1], N_CLASSES];
        let model = Mlp::new(&dims, config.init_seed);
        let optimizer = Optimizer::new(config.optimizer, config.momentum, model.params().len());
        let rng = SplitMix64::seed_from_u64(config.init_seed ^ 0x005E_ED0F_D47A);
        Ok(Self { model, optimizer, rng, config })
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Switches config, keeping the model. Optimizer state is reset whenever
    /// the optimizer or its momentum changes.
    pub fn set_config(&mut self, config: TrainConfig) -> Result<(), TrainError> {
        config.validate()?;
        if config.optimizer != self.optimizer.kind() || config.momentum != self.optimizer.momentum() {
            self.optimizer = Optimizer::new(config.optimizer, config.momentum, self.model.params().len());
        }
        self.config = config;
        Ok(())
    }

    pub fn run(&mut self, data: &SplitDataset) -> TrainOutcome {
        let cfg = self.config.clone();
        let train = &data.train;
        let n = train.len();
        let batch = cfg.batch_size.min(n);
        let steps_per_epoch = n.div_ceil(batch);
        let total_steps = steps_per_epoch * cfg.epochs_per_iteration;
        let mut order: Vec<usize> = (0..n).collect();
        let mut grad_norms = Vec::with_capacity(total_steps);
        let mut epoch_losses = Vec::with_capacity(cfg.epochs_per_iteration);
        let mut last_batch_losses = Vec::new();
        let mut step = 0;

        for _ in 0..cfg.epochs_per_iteration {
            order.shuffle(&mut self.rng);
            last_batch_losses.clear();
            for chunk in order.chunks(batch) {
                let xs: Vec<&[f64]> = chunk.iter().map(|&i| train.x[i].as_slice()).collect();
                let ys: Vec<usize> = chunk.iter().map(|&i| train.y[i]).collect();
                let dropout = (cfg.dropout_p > 0.0).then(|| Dropout { p: cfg.dropout_p, rng: &mut self.rng });
                let (loss, mut grad) = self.model.loss_and_grad(&xs, &ys, dropout);
                let norm = l2_norm(&grad);
                if !loss.is_finite() || loss > DIVERGENCE_LOSS || !norm.is_finite() {
                    grad_norms.push(norm);
                    return TrainOutcome { metrics: TrainMetrics::diverged(&grad_norms), epoch_losses };
                }
                grad_norms.push(norm);
                if let Some(c) = cfg.grad_clip {
                    grad = clip_gradient(&grad, c);
                }
                let lr = scheduled_lr(cfg.learning_rate, cfg.lr_schedule, step, total_steps);
                self.optimizer.step(self.model.params_mut(), &grad, lr, cfg.weight_decay);
                step += 1;
                if !self.model.is_finite() {
                    return TrainOutcome { metrics: TrainMetrics::diverged(&grad_norms), epoch_losses };
                }
                last_batch_losses.push(loss);
            }
            epoch_losses.push(mean(&last_batch_losses));
        }

        let val_x: Vec<&[f64]> = data.val.x.iter().map(Vec::as_slice).collect();
        let (val_loss, val_accuracy) = self.model.evaluate(&val_x, &data.val.y);
        if !val_loss.is_finite() || val_loss > DIVERGENCE_LOSS {
            return TrainOutcome { metrics: TrainMetrics::diverged(&grad_norms), epoch_losses };
        }
        let (grad_norm_mean, grad_norm_max) = norm_stats(&grad_norms);
        let final_mean = mean(&last_batch_losses);
        let loss_variance =
            last_batch_losses.iter().map(|l| (l - final_mean).powi(2)).sum::<f64>() / last_batch_losses.len() as f64;
        let metrics = TrainMetrics {
            train_loss: *epoch_losses.last().expect("at least one epoch"),
            val_loss,
            val_accuracy,
            grad_norm_mean,
            grad_norm_max,
            loss_variance,
            convergence_rate: convergence_rate(&epoch_losses),
            diverged: false,
        };
        TrainOutcome { metrics, epoch_losses }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean per-epoch loss improvement over the last [`CONVERGENCE_WINDOW`]
/// epochs; positive while the loss is still falling.
pub fn convergence_rate(epoch_losses: &[f64]) -> f64 {
    let n = epoch_losses.len();
    if n < 2 {
        return 0.0;
    }
    let start = n.saturating_sub(CONVERGENCE_WINDOW).max(1);
    let diffs: Vec<f64> = (start..n).map(|e| epoch_losses[e - 1] - epoch_losses[e]).collect();
    mean(&diffs)
}

/// Trains a fresh model from `config.init_seed`.
pub fn train_and_measure(config: &TrainConfig, data: &SplitDataset) -> Result<TrainOutcome, TrainError> {
    Ok(Trainer::new(config.clone())?.run(data))
}

const ACTIONS: [(&str, &str, &str); 24] = [
    ("lr_up_2x", "learning_rate", "multiply the learning rate by 2"),
    ("lr_up_5x", "learning_rate", "multiply the learning rate by 5"),
    ("lr_down_2x", "learning_rate", "divide the learning rate by 2"),
    ("lr_down_5x", "learning_rate", "divide the learning rate by 5"),
    ("lr_schedule_cosine", "learning_rate", "use a cosine-annealed learning rate"),
    ("lr_schedule_warmup", "learning_rate", "use a linear warmup over the first tenth of training"),
    ("batch_up_2x", "batch_size", "double the batch size"),
    ("batch_down_2x", "batch_size", "halve the batch size"),
    ("batch_set_16", "batch_size", "set the batch size to 16"),
    ("batch_set_128", "batch_size", "set the batch size to 128"),
    ("dropout_up_0.1", "regularization", "raise dropout by 0.1"),
    ("dropout_down_0.1", "regularization", "lower dropout by 0.1"),
    ("weight_decay_up_10x", "regularization", "multiply weight decay by 10"),
    ("weight_decay_down_10x", "regularization", "divide weight decay by 10"),
    ("weight_decay_enable", "regularization", "set weight decay to 1e-4"),
    ("weight_decay_disable", "regularization", "set weight decay to 0"),
    ("switch_sgd", "optimizer", "plain SGD"),
    ("switch_adam", "optimizer", "Adam"),
    ("switch_adamw", "optimizer", "AdamW (decoupled weight decay)"),
    ("switch_sgd_momentum", "optimizer", "SGD with momentum 0.9"),
    ("clip_on_1.0", "gradient_control", "clip the global gradient norm at 1.0"),
    ("clip_on_0.5", "gradient_control", "clip the global gradient norm at 0.5"),
    ("clip_off", "gradient_control", "disable gradient clipping"),
    ("clip_on_5.0", "gradient_control", "clip the global gradient norm at 5.0"),
];

pub fn list_actions() -> Vec<ActionSpec> {
    ACTIONS
        .iter()
        .map(|(id, category, label)| ActionSpec {
            id: id.to_string(),
            category: category.to_string(),
            label: label.to_string(),
            payload: json!(null),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionOutcome {
    pub config: TrainConfig,
    /// Describes the clamp when the requested value fell outside its bounds.
    pub clamped: Option<String>,
}

fn clamp_f(name: &str, v: f64, (lo, hi): (f64, f64), note: &mut Option<String>) -> f64 {
    // round away accumulated decimal noise such as 0.1 + 0.2
    let v = (v * 1e12).round() / 1e12;
    if v < lo || v > hi {
        let c = v.clamp(lo, hi);
        *note = Some(format!("{name} {v} clamped to {c}"));
        c
    } else {
        v
    }
}

fn clamp_batch(v: usize, note: &mut Option<String>) -> usize {
    let (lo, hi) = BATCH_BOUNDS;
    if v < lo || v > hi {
        let c = v.clamp(lo, hi);
        *note = Some(format!("batch_size {v} clamped to {c}"));
        c
    } else {
        v
    }
}

pub fn apply_action(config: &TrainConfig, action_id: &str) -> Result<ActionOutcome, TrainError> {
    let mut c = config.clone();
    let mut note = None;
    let lr = c.learning_rate;
    let wd = c.weight_decay;
    match action_id {
        "lr_up_2x" => c.learning_rate = clamp_f("learning_rate", lr * 2.0, LR_BOUNDS, &mut note),
        "lr_up_5x" => c.learning_rate = clamp_f("learning_rate", lr * 5.0, LR_BOUNDS, &mut note),
        "lr_down_2x" => c.learning_rate = clamp_f("learning_rate", lr / 2.0, LR_BOUNDS, &mut note),
        "lr_down_5x" => c.learning_rate = clamp_f("learning_rate", lr / 5.0, LR_BOUNDS, &mut note),
        "lr_schedule_cosine" => c.lr_schedule = LrSchedule::Cosine,
        "lr_schedule_warmup" => c.lr_schedule = LrSchedule::Warmup,
        "batch_up_2x" => c.batch_size = clamp_batch(c.batch_size.saturating_mul(2), &mut note),
        "batch_down_2x" => c.batch_size = clamp_batch(c.batch_size / 2, &mut note),
        "batch_set_16" => c.batch_size = 16,
        "batch_set_128" => c.batch_size = 128,
        "dropout_up_0.1" => c.dropout_p = clamp_f("dropout_p", c.dropout_p + 0.1, DROPOUT_BOUNDS, &mut note),
        "dropout_down_0.1" => c.dropout_p = clamp_f("dropout_p", c.dropout_p - 0.1, DROPOUT_BOUNDS, &mut note),
        "weight_decay_up_10x" => {
            c.weight_decay = clamp_f("weight_decay", wd * 10.0, WEIGHT_DECAY_BOUNDS, &mut note);
            if wd == 0.0 {
                note = Some("weight_decay is 0; scaling has no effect".into());
            }
        }
        "weight_decay_down_10x" => c.weight_decay = clamp_f("weight_decay", wd / 10.0, WEIGHT_DECAY_BOUNDS, &mut note),
        "weight_decay_enable" => c.weight_decay = WEIGHT_DECAY_ENABLE,
        "weight_decay_disable" => c.weight_decay = 0.0,
        "switch_sgd" => {
            c.optimizer = OptimizerKind::Sgd;
            c.momentum = 0.0;
        }
        "switch_adam" => {
            c.optimizer = OptimizerKind::Adam;
            c.momentum = 0.0;
        }
        "switch_adamw" => {
            c.optimizer = OptimizerKind::AdamW;
            c.momentum = 0.0;
        }
        "switch_sgd_momentum" => {
            c.optimizer = OptimizerKind::Sgd;
            c.momentum = SGD_MOMENTUM;
        }
        "clip_on_1.0" => c.grad_clip = Some(1.0),
        "clip_on_0.5" => c.grad_clip = Some(0.5),
        "clip_off" => c.grad_clip = None,
        "clip_on_5.0" => c.grad_clip = Some(5.0),
        other => return Err(TrainError::UnknownAction(other.to_string())),
    }
    Ok(ActionOutcome { config: c, clamped: note })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Every iteration trains a fresh model from `init_seed`.
    #[default]
    Retrain,
    /// Every iteration continues training the current model.
    Resume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainDomainConfig {
    pub dataset_seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub mode: TrainMode,
    /// When false, each trial's seed becomes the model `init_seed`.
    pub fixed_init_seed: bool,
    pub base: TrainConfig,
}

impl Default for TrainDomainConfig {
    fn default() -> Self {
        Self { dataset_seed: 1, n_train: 512, n_val: 256, mode: TrainMode::Retrain, fixed_init_seed: false, base: TrainConfig::default() }
    }
}

pub struct TrainDomain {
    settings: TrainDomainConfig,
    data: SplitDataset,
    config: TrainConfig,
    trainer: Option<Trainer>,
    last: Option<MetricSnapshot>,
    clock: u64,
    log: Vec<String>,
}

impl TrainDomain {
    pub fn new(settings: TrainDomainConfig) -> Result<Self, TrainError> {
        settings.base.validate()?;
        let data = generate_dataset(settings.dataset_seed, settings.n_train, settings.n_val)?;
        let config = settings.base.clone();
        Ok(Self { settings, data, config, trainer: None, last: None, clock: 0, log: Vec::new() })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn dataset(&self) -> &SplitDataset {
        &self.data
    }

    fn measure(&mut self) -> Result<TrainOutcome, TrainError> {
        match self.settings.mode {
            TrainMode::Retrain => train_and_measure(&self.config, &self.data),
            TrainMode::Resume => {
                let trainer = match self.trainer.as_mut() {
                    Some(t) => {
                        t.set_config(self.config.clone())?;
                        t
                    }
                    None => self.trainer.insert(Trainer::new(self.config.clone())?),
                };
                Ok(trainer.run(&self.data))
            }
        }
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }
}

impl Domain for TrainDomain {
    fn id(&self) -> String {
        DOMAIN_ID.into()
    }

    fn metric_names(&self) -> Vec<String> {
        METRIC_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn actions(&self) -> Vec<ActionSpec> {
        list_actions()
    }

    fn objective_sense(&self) -> ObjectiveSense {
        ObjectiveSense::Minimize
    }

    fn reset(&mut self, seed: u64) -> Result<MetricSnapshot, DomainError> {
        self.config = self.settings.base.clone();
        if !self.settings.fixed_init_seed {
            self.config.init_seed = seed;
        }
        self.trainer = None;
        self.clock = 0;
        let outcome = self.measure().map_err(|e| DomainError::Setup(e.to_string()))?;
        if outcome.metrics.diverged {
            self.log.push("baseline configuration diverged".into());
        }
        let snap = outcome.metrics.snapshot(0);
        self.last = Some(snap.clone());
        Ok(snap)
    }

    fn observe(&mut self) -> Result<MetricSnapshot, DomainError> {
        let t = self.tick();
        let mut snap = self.last.clone().ok_or_else(|| DomainError::Failure("observe called before reset".into()))?;
        snap.captured_at = t;
        Ok(snap)
    }

    fn intervene(&mut self, decision: &AgentDecision) -> Result<Intervention, DomainError> {
        let outcome = apply_action(&self.config, &decision.action_id).map_err(|e| match e {
            TrainError::UnknownAction(a) => DomainError::UnknownAction(a),
            other => DomainError::Failure(other.to_string()),
        })?;
        let mut flags = Vec::new();
        if let Some(detail) = outcome.clamped {
            flags.push(IterationFlag::Clamped { detail });
        }
        self.config = outcome.config;
        let measured = self.measure().map_err(|e| DomainError::Failure(e.to_string()))?;
        if measured.metrics.diverged {
            flags.push(IterationFlag::Diverged);
            self.log.push(format!("training diverged after {}", decision.action_id));
        }
        let t = self.tick();
        let post = measured.metrics.snapshot(t);
        self.last = Some(post.clone());
        Ok(Intervention { post, flags })
    }

    fn drain_log(&mut self) -> Vec<String> {
        std::mem::take(&mut self.log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> TrainConfig {
        TrainConfig { epochs_per_iteration: 3, ..TrainConfig::default() }
    }

    #[test]
    fn roster_has_24_actions_in_five_categories() {
        let actions = list_actions();
        assert_eq!(actions.len(), 24);
        let mut cats: Vec<_> = actions.iter().map(|a| a.category.clone()).collect();
        cats.sort();
        cats.dedup();
        assert_eq!(cats.len(), 5);
        for a in &actions {
            assert!(apply_action(&TrainConfig::default(), &a.id).is_ok(), "{}", a.id);
        }
    }

    #[test]
    fn action_examples() {
        let c = TrainConfig::default();
        assert_eq!(apply_action(&c, "lr_up_2x").unwrap().config.learning_rate, 0.002);
        let out = apply_action(&c, "dropout_down_0.1").unwrap();
        assert_eq!(out.config.dropout_p, 0.0);
        assert!(out.clamped.is_some());
        let out = apply_action(&c, "switch_sgd").unwrap();
        assert_eq!(out.config.optimizer, OptimizerKind::Sgd);
        assert_eq!(out.config.momentum, 0.0);
        assert!(matches!(apply_action(&c, "lr_up_3x"), Err(TrainError::UnknownAction(_))));
        let up = apply_action(&apply_action(&c, "dropout_up_0.1").unwrap().config, "dropout_up_0.1").unwrap();
        assert_eq!(up.config.dropout_p, 0.2);
        assert!(up.clamped.is_none());
        let hi = TrainConfig { learning_rate: 8.0, ..c };
        let out = apply_action(&hi, "lr_up_2x").unwrap();
        assert_eq!(out.config.learning_rate, LR_BOUNDS.1);
        assert!(out.clamped.is_some());
    }

    #[test]
    fn convergence_window() {
        assert_eq!(convergence_rate(&[1.0]), 0.0);
        assert_eq!(convergence_rate(&[1.0, 0.8]), 0.19999999999999996);
        // last three epochs: improvements 0.3, 0.2, 0.1 (the first drop is ignored)
        assert!((convergence_rate(&[5.0, 1.0, 0.7, 0.5, 0.4]) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_freezes_training() {
        let data = generate_dataset(1, 512, 256).unwrap();
        let cfg = TrainConfig { learning_rate: 0.0, ..quick() };
        let out = train_and_measure(&cfg, &data).unwrap();
        let first = out.epoch_losses[0];
        for l in &out.epoch_losses {
            assert!((l - first).abs() < 1e-12, "{:?}", out.epoch_losses);
        }
        assert!(out.metrics.convergence_rate.abs() < 1e-12);
    }

    #[test]
    fn deterministic_metrics() {
        let data = generate_dataset(1, 256, 128).unwrap();
        let cfg = TrainConfig { dropout_p: 0.2, ..quick() };
        assert_eq!(train_and_measure(&cfg, &data).unwrap(), train_and_measure(&cfg, &data).unwrap());
    }

    #[test]
    fn huge_learning_rate_diverges_into_sentinels() {
        let data = generate_dataset(1, 512, 256).unwrap();
        let cfg = TrainConfig { learning_rate: 1e3, ..quick() };
        let m = train_and_measure(&cfg, &data).unwrap().metrics;
        assert!(m.diverged);
        let snap = m.snapshot(1);
        assert!(snap.is_finite());
        assert_eq!(snap.objective_value, NON_FINITE_SENTINEL);
    }

    #[test]
    fn domain_snapshot_exposes_all_metrics() {
        let settings = TrainDomainConfig { n_train: 128, n_val: 64, base: quick(), ..Default::default() };
        let mut d = TrainDomain::new(settings).unwrap();
        let base = d.reset(3).unwrap();
        assert_eq!(base.metrics.keys().cloned().collect::<Vec<_>>().len(), METRIC_NAMES.len());
        assert_eq!(base.objective_value, base.median("val_loss").unwrap());
        let m = &base.metrics;
        assert!(m["grad_norm_max"].median >= m["grad_norm_mean"].median);
    }
}
