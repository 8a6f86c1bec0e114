//! Rank-sum test and percentile bootstrap for comparing per-trial gaps.

use rand::RngCore;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::AnalysisError;

/// Largest `|x| * |y|` for which the exact null distribution is enumerated.
pub const EXACT_MAX_PRODUCT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

/// Midranks of the pooled sample, doubled so they are integers.
fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // positions i..=j share ranks (i+1)..=(j+1); doubled average = i+j+2
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MannWhitney, AnalysisError> {
    if x.is_empty() || y.is_empty() {
        return Err(AnalysisError::EmptyInput("Mann-Whitney needs two nonempty samples".into()));
    }
    let (n, m) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let rank_sum_x2: u64 = ranks[..n].iter().sum();
    // 2U = 2R - n(n+1)
    let u2 = rank_sum_x2 as i64 - (n * (n + 1)) as i64;
    let u = u2 as f64 / 2.0;

    if n * m <= EXACT_MAX_PRODUCT {
        let p = exact_two_sided(&ranks, n, m, u2);
        Ok(MannWhitney { u, p_two_sided: p, exact: true })
    } else {
        let p = normal_two_sided(&pooled, n, m, u);
        Ok(MannWhitney { u, p_two_sided: p, exact: false })
    }
}

/// Exact two-sided p: the share of all C(n+m, n) assignments of the pooled
/// (mid)ranks to the first sample whose U lies at least as far from nm/2 as
/// the observed one. Counted with a subset-sum table over doubled ranks.
fn exact_two_sided(ranks: &[u64], n: usize, m: usize, u2_obs: i64) -> f64 {
    let max_sum: usize = ranks.iter().sum::<u64>() as usize;
    // ways[k][s]: subsets of size k with doubled rank sum s
    let mut ways = vec![vec![0u64; max_sum + 1]; n + 1];
    ways[0][0] = 1;
    for &r in ranks {
        let r = r as usize;
        for k in (1..=n).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (r..=max_sum).rev() {
                if prev[s - r] != 0 {
                    cur[s] += prev[s - r];
                }
            }
        }
    }
    let nm = (n * m) as i64;
    let offset = (n * (n + 1)) as i64;
    let dev_obs = (u2_obs - nm).abs();
    let mut extreme = 0u64;
    let mut total = 0u64;
    for (s, &w) in ways[n].iter().enumerate() {
        if w == 0 {
            continue;
        }
        total += w;
        if (s as i64 - offset - nm).abs() >= dev_obs {
            extreme += w;
        }
    }
    extreme as f64 / total as f64
}

/// Normal approximation with tie correction and continuity correction.
fn normal_two_sided(pooled: &[f64], n: usize, m: usize, u: f64) -> f64 {
    let big_n = (n + m) as f64;
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let nm = (n * m) as f64;
    let var = nm / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let dev = ((u - nm / 2.0).abs() - 0.5).max(0.0);
    let z = dev / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Uniform draw in [0, 1) from the top 53 bits.
fn unit(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn resampled_mean(sample: &[f64], rng: &mut SplitMix64) -> f64 {
    let n = sample.len();
    let mut sum = 0.0;
    for _ in 0..n {
        let idx = ((unit(rng) * n as f64).floor() as usize).min(n - 1);
        sum += sample[idx];
    }
    sum / n as f64
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for `mean(x) - mean(y)`. Each replicate
/// resamples `x` then `y` with SplitMix64 indices `floor(u * n)`.
pub fn bootstrap_ci(x: &[f64], y: &[f64], b: usize, level: f64, seed: u64) -> Result<Interval, AnalysisError> {
    if x.is_empty() || y.is_empty() {
        return Err(AnalysisError::EmptyInput("bootstrap needs two nonempty samples".into()));
    }
    if b < 1000 {
        return Err(AnalysisError::InvalidArgument(format!("bootstrap replicates must be >= 1000, got {b}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(AnalysisError::InvalidArgument(format!("confidence level must lie in (0,1), got {level}")));
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut diffs: Vec<f64> = (0..b)
        .map(|_| {
            let mx = resampled_mean(x, &mut rng);
            let my = resampled_mean(y, &mut rng);
            mx - my
        })
        .collect();
    diffs.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Ok(Interval {
        lower: quantile_sorted(&diffs, alpha / 2.0),
        upper: quantile_sorted(&diffs, 1.0 - alpha / 2.0),
    })
}
