use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::SplitMix64;

use super::TrainError;

pub const N_FEATURES: usize = 8;
pub const N_CLASSES: usize = 2;
/// Cluster centre offset along the two informative dimensions.
const CENTRE: f64 = 1.5;
const NOISE_STD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn class_fraction(&self, class: usize) -> f64 {
        self.y.iter().filter(|&&c| c == class).count() as f64 / self.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub val: Dataset,
}

/// Two classes, each a pair of Gaussian blobs placed XOR-style on the first
/// two dimensions (so neither class is linearly separable from the other);
/// the remaining six dimensions are pure noise.
pub fn generate_dataset(seed: u64, n_train: usize, n_val: usize) -> Result<SplitDataset, TrainError> {
    if n_train == 0 || n_val == 0 {
        return Err(TrainError::InvalidDataset(format!(
            "n_train and n_val must be >= 1 (got {n_train}, {n_val})"
        )));
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    let mut draw = |n: usize| {
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let class = usize::from(rng.random_bool(0.5));
            let flip = rng.random_bool(0.5);
            let (a, b) = match (class, flip) {
                (0, false) => (CENTRE, CENTRE),
                (0, true) => (-CENTRE, -CENTRE),
                (_, false) => (CENTRE, -CENTRE),
                (_, true) => (-CENTRE, CENTRE),
            };
            let mut row = vec![0.0; N_FEATURES];
            row[0] = a;
            row[1] = b;
            for v in row.iter_mut() {
                *v += noise.sample(&mut rng);
            }
            x.push(row);
            y.push(class);
        }
        Dataset { x, y }
    };
    let train = draw(n_train);
    let val = draw(n_val);
    Ok(SplitDataset { train, val })
}
