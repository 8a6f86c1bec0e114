//! Entropy and mutual information on finite joint tables, in bits.

use serde::{Deserialize, Serialize};

use super::AnalysisError;

const MASS_TOLERANCE: f64 = 1e-12;

/// Joint probabilities over (cause symbol, observable symbol). Rows index
/// causes, columns index observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    probabilities: Vec<Vec<f64>>,
    causes: Vec<String>,
    observables: Vec<String>,
}

impl JointDistribution {
    pub fn new(
        probabilities: Vec<Vec<f64>>,
        causes: Vec<String>,
        observables: Vec<String>,
    ) -> Result<Self, AnalysisError> {
        if probabilities.len() != causes.len() || causes.is_empty() || observables.is_empty() {
            return Err(AnalysisError::InvalidDistribution("alphabet sizes do not match table".into()));
        }
        let mut total = 0.0;
        for row in &probabilities {
            if row.len() != observables.len() {
                return Err(AnalysisError::InvalidDistribution("ragged probability table".into()));
            }
            for &p in row {
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(AnalysisError::InvalidDistribution(format!("invalid probability {p}")));
                }
                total += p;
            }
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(AnalysisError::InvalidDistribution(format!("total mass {total} != 1")));
        }
        Ok(Self { probabilities, causes, observables })
    }

    /// Table with numeric labels `0..rows` and `0..cols`.
    pub fn from_table(probabilities: Vec<Vec<f64>>) -> Result<Self, AnalysisError> {
        let rows = probabilities.len();
        let cols = probabilities.first().map_or(0, Vec::len);
        Self::new(
            probabilities,
            (0..rows).map(|i| i.to_string()).collect(),
            (0..cols).map(|i| i.to_string()).collect(),
        )
    }

    pub fn probabilities(&self) -> &[Vec<f64>] {
        &self.probabilities
    }

    pub fn causes(&self) -> &[String] {
        &self.causes
    }

    pub fn observables(&self) -> &[String] {
        &self.observables
    }

    pub fn cause_marginal(&self) -> Vec<f64> {
        self.probabilities.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn observable_marginal(&self) -> Vec<f64> {
        (0..self.observables.len())
            .map(|j| self.probabilities.iter().map(|row| row[j]).sum())
            .collect()
    }
}

/// Shannon entropy in bits with 0 log 0 = 0.
pub fn entropy(dist: &[f64]) -> Result<f64, AnalysisError> {
    let mut total = 0.0;
    for &p in dist {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(AnalysisError::InvalidDistribution(format!("invalid probability {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(AnalysisError::InvalidDistribution(format!("total mass {total} != 1")));
    }
    Ok(entropy_unchecked(dist))
}

fn entropy_unchecked(dist: &[f64]) -> f64 {
    dist.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum::<f64>().max(0.0)
}

pub fn mutual_information(joint: &JointDistribution) -> f64 {
    let pc = joint.cause_marginal();
    let po = joint.observable_marginal();
    let mut mi = 0.0;
    for (i, row) in joint.probabilities.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (pc[i] * po[j])).log2();
            }
        }
    }
    // clamp rounding noise into [0, min(H(C), H(O))]
    let bound = entropy_unchecked(&pc).min(entropy_unchecked(&po));
    mi.clamp(0.0, bound)
}

/// `1 - I(O;C) / H(C)`.
pub fn observability_gap(joint: &JointDistribution) -> Result<f64, AnalysisError> {
    let h_c = entropy_unchecked(&joint.cause_marginal());
    if h_c <= 1e-15 {
        return Err(AnalysisError::DegenerateEntropy);
    }
    Ok((1.0 - mutual_information(joint) / h_c).clamp(0.0, 1.0))
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    entropy_unchecked(&[p, 1.0 - p])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_binary_is_one_bit() {
        assert_eq!(entropy(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert!(entropy(&[0.5, 0.4]).is_err());
    }

    #[test]
    fn product_joint_has_zero_information() {
        let pc = [0.3, 0.7];
        let po = [0.25, 0.25, 0.5];
        let table = pc.iter().map(|a| po.iter().map(|b| a * b).collect()).collect();
        let joint = JointDistribution::from_table(table).unwrap();
        assert!(mutual_information(&joint).abs() < 1e-12);
        assert!((observability_gap(&joint).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_joint_has_full_information() {
        let joint = JointDistribution::from_table(vec![
            vec![0.25, 0.0, 0.0, 0.0],
            vec![0.0, 0.25, 0.0, 0.0],
            vec![0.0, 0.0, 0.25, 0.0],
            vec![0.0, 0.0, 0.0, 0.25],
        ])
        .unwrap();
        assert!((mutual_information(&joint) - 2.0).abs() < 1e-12);
        assert!(observability_gap(&joint).unwrap().abs() < 1e-12);
    }

    #[test]
    fn degenerate_cause_entropy() {
        let joint = JointDistribution::from_table(vec![vec![0.5, 0.5]]).unwrap();
        assert!(matches!(observability_gap(&joint), Err(AnalysisError::DegenerateEntropy)));
    }

    #[test]
    fn invalid_tables_rejected() {
        assert!(JointDistribution::from_table(vec![vec![0.5, 0.6]]).is_err());
        assert!(JointDistribution::from_table(vec![vec![-0.1, 1.1]]).is_err());
        assert!(JointDistribution::from_table(vec![vec![0.5], vec![0.25, 0.25]]).is_err());
    }

    proptest! {
        #[test]
        fn mi_bounds(raw in prop::collection::vec(0.0f64..1.0, 12)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let table: Vec<Vec<f64>> = raw.chunks(4).map(|r| r.iter().map(|v| v / total).collect()).collect();
            // renormalize against rounding
            let s: f64 = table.iter().flatten().sum();
            let table: Vec<Vec<f64>> = table.into_iter().map(|r| r.into_iter().map(|v| v / s).collect()).collect();
            let joint = JointDistribution::from_table(table).unwrap();
            let mi = mutual_information(&joint);
            let hc = entropy_unchecked(&joint.cause_marginal());
            let ho = entropy_unchecked(&joint.observable_marginal());
            prop_assert!(mi >= 0.0);
            prop_assert!(mi <= hc.min(ho) + 1e-12);
            if hc > 1e-9 {
                let g = observability_gap(&joint).unwrap();
                prop_assert!((0.0..=1.0).contains(&g));
            }
        }
    }
}
