use serde::{Deserialize, Serialize};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "SGD")]
    Sgd,
    Adam,
    AdamW,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "SGD",
            OptimizerKind::Adam => "Adam",
            OptimizerKind::AdamW => "AdamW",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    Cosine,
    Warmup,
}

/// Learning rate at `step` of a run lasting `total_steps`. Warmup ramps
/// linearly over the first tenth of the run.
pub fn scheduled_lr(base: f64, schedule: LrSchedule, step: usize, total_steps: usize) -> f64 {
    let total = total_steps.max(1) as f64;
    match schedule {
        LrSchedule::Constant => base,
        LrSchedule::Cosine => base * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total).cos()),
        LrSchedule::Warmup => {
            let warm = (total / 10.0).ceil().max(1.0);
            base * ((step as f64 + 1.0) / warm).min(1.0)
        }
    }
}

/// Scales `grad` onto the L2 ball of radius `threshold`.
pub fn clip_gradient(grad: &[f64], threshold: f64) -> Vec<f64> {
    assert!(threshold > 0.0, "clip threshold must be positive");
    let norm = l2_norm(grad);
    if norm <= threshold {
        return grad.to_vec();
    }
    let scale = threshold / norm;
    grad.iter().map(|g| g * scale).collect()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    // scaled accumulation so large-but-finite gradients do not overflow
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * v.iter().map(|x| (x / m) * (x / m)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    momentum: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, momentum: f64, n_params: usize) -> Self {
        Self { kind, momentum, first: vec![0.0; n_params], second: vec![0.0; n_params], t: 0 }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for ((p, g), v) in params.iter_mut().zip(grad).zip(self.first.iter_mut()) {
                    let g = g + weight_decay * *p;
                    if self.momentum > 0.0 {
                        *v = self.momentum * *v + g;
                        *p -= lr * *v;
                    } else {
                        *p -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam | OptimizerKind::AdamW => {
                let decoupled = self.kind == OptimizerKind::AdamW;
                let c1 = 1.0 - BETA1.powf(self.t as f64);
                let c2 = 1.0 - BETA2.powf(self.t as f64);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(self.first.iter_mut()).zip(self.second.iter_mut()) {
                    let g = if decoupled { *g } else { g + weight_decay * *p };
                    if decoupled {
                        *p -= lr * weight_decay * *p;
                    }
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}
