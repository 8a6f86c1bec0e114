use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::SplitMix64;

/// Fully connected ReLU network with all parameters in one flat vector.
/// Layer `l` stores its `out × in` weight matrix (row-major) followed by its
/// `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Inverted dropout on hidden activations: kept units are scaled by
/// `1/(1-p)` so no rescaling is needed at evaluation time.
pub struct Dropout<'a> {
    pub p: f64,
    pub rng: &'a mut SplitMix64,
}

impl Mlp {
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|&d| d > 0), "invalid layer dims {dims:?}");
        let n = dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Self { dims: dims.to_vec(), params: vec![0.0; n] }
    }

    /// He-normal weights, zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Self {
        let mut m = Self::zeros(dims);
        let mut rng = SplitMix64::seed_from_u64(seed);
        for l in 0..m.n_layers() {
            let (n_in, n_out) = (m.dims[l], m.dims[l + 1]);
            let normal = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("valid std");
            let w = m.weight_offset(l);
            for p in &mut m.params[w..w + n_in * n_out] {
                *p = normal.sample(&mut rng);
            }
        }
        m
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn weight_offset(&self, layer: usize) -> usize {
        self.dims.windows(2).take(layer).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn bias_offset(&self, layer: usize) -> usize {
        self.weight_offset(layer) + self.dims[layer] * self.dims[layer + 1]
    }

    fn affine(&self, layer: usize, input: &[f64], out: &mut Vec<f64>) {
        let (n_in, n_out) = (self.dims[layer], self.dims[layer + 1]);
        let w = &self.params[self.weight_offset(layer)..][..n_in * n_out];
        let b = &self.params[self.bias_offset(layer)..][..n_out];
        out.clear();
        out.extend((0..n_out).map(|j| {
            let row = &w[j * n_in..(j + 1) * n_in];
            b[j] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>()
        }));
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut z = Vec::new();
        for l in 0..self.n_layers() {
            self.affine(l, &a, &mut z);
            if l + 1 < self.n_layers() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut a, &mut z);
        }
        a
    }

    /// Mean cross-entropy over the batch, without dropout.
    pub fn loss(&self, xs: &[&[f64]], ys: &[usize]) -> f64 {
        let total: f64 = xs.iter().zip(ys).map(|(x, &y)| cross_entropy(&self.logits(x), y)).sum();
        total / xs.len() as f64
    }

    /// Mean loss and fraction of correct argmax predictions.
    pub fn evaluate(&self, xs: &[&[f64]], ys: &[usize]) -> (f64, f64) {
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (x, &y) in xs.iter().zip(ys) {
            let z = self.logits(x);
            loss += cross_entropy(&z, y);
            let pred = (0..z.len()).fold(0, |best, i| if z[i] > z[best] { i } else { best });
            correct += usize::from(pred == y);
        }
        let n = xs.len() as f64;
        (loss / n, correct as f64 / n)
    }

    /// Mean cross-entropy and its exact gradient with respect to every
    /// parameter, in the flat layout of [`Mlp::params`].
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[usize], mut dropout: Option<Dropout<'_>>) -> (f64, Vec<f64>) {
        assert_eq!(xs.len(), ys.len());
        assert!(!xs.is_empty(), "empty batch");
        let n_layers = self.n_layers();
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        // acts[l] is the input to layer l; gates[l] is d(acts[l+1])/d(z_l) for hidden layers
        let mut acts: Vec<Vec<f64>> = self.dims[..n_layers].iter().map(|&d| vec![0.0; d]).collect();
        let mut gates: Vec<Vec<f64>> = self.dims[1..n_layers].iter().map(|&d| vec![0.0; d]).collect();
        let mut z = Vec::new();

        for (x, &y) in xs.iter().zip(ys) {
            acts[0].copy_from_slice(x);
            for l in 0..n_layers {
                self.affine(l, &acts[l], &mut z);
                if l + 1 == n_layers {
                    break;
                }
                for (j, &v) in z.iter().enumerate() {
                    let keep = match dropout.as_mut() {
                        Some(d) if d.p > 0.0 => {
                            if d.rng.random::<f64>() < d.p {
                                0.0
                            } else {
                                1.0 / (1.0 - d.p)
                            }
                        }
                        _ => 1.0,
                    };
                    let g = if v > 0.0 { keep } else { 0.0 };
                    gates[l][j] = g;
                    acts[l + 1][j] = v.max(0.0) * keep;
                }
            }
            total += cross_entropy(&z, y);

            // d loss / d logits = softmax - onehot
            let mut delta = softmax(&z);
            delta[y] -= 1.0;
            for l in (0..n_layers).rev() {
                let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
                let w_off = self.weight_offset(l);
                let b_off = self.bias_offset(l);
                for j in 0..n_out {
                    let dj = delta[j];
                    if dj == 0.0 {
                        continue;
                    }
                    grad[b_off + j] += dj;
                    let g = &mut grad[w_off + j * n_in..w_off + (j + 1) * n_in];
                    for (gi, a) in g.iter_mut().zip(&acts[l]) {
                        *gi += dj * a;
                    }
                }
                if l == 0 {
                    break;
                }
                let w = &self.params[w_off..w_off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (j, &dj) in delta.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    for (p, wji) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *p += dj * wji;
                    }
                }
                for (p, g) in prev.iter_mut().zip(&gates[l - 1]) {
                    *p *= g;
                }
                delta = prev;
            }
        }

        let n = xs.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (total / n, grad)
    }

    /// Pre-activations of every hidden unit for `x`; used to tell whether a
    /// parameter perturbation crosses a ReLU kink.
    pub fn hidden_preactivations(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        let mut a = x.to_vec();
        let mut z = Vec::new();
        for l in 0..self.n_layers() - 1 {
            self.affine(l, &a, &mut z);
            out.extend_from_slice(&z);
            a = z.iter().map(|v| v.max(0.0)).collect();
        }
        out
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}
