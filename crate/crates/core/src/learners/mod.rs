//! Base learners: bagged Gini forest, softmax gradient boosting with Newton
//! leaves, and a one-vs-rest linear max-margin classifier.

mod boost;
mod forest;
mod hist;
mod linear;
pub mod tree;

use serde::{Deserialize, Serialize};

pub use boost::{boost_fit, boost_fit_traced, boost_predict, BoostModel, BoostParams};
pub use forest::{forest_fit, forest_predict, ForestModel, ForestParams};
pub use linear::{linear_fit, linear_objective, linear_predict, LinearModel, LinearParams};

use crate::error::{Error, Result};

/// A probability vector over `K` classes: non-negative, summing to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities(Vec<f64>);

impl ClassProbabilities {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NotADistribution("empty vector".into()));
        }
        if values.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::NotADistribution(format!("negative or non-finite entry in {values:?}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NotADistribution(format!("entries sum to {sum}")));
        }
        Ok(ClassProbabilities(values))
    }

    pub fn uniform(k: usize) -> Self {
        ClassProbabilities(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    (0..values.len()).fold(0, |best, i| if values[i] > values[best] { i } else { best })
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> ClassProbabilities {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    ClassProbabilities(exps.into_iter().map(|e| e / total).collect())
}

/// Hyperparameters for the three base learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct LearnerParams {
    pub forest: ForestParams,
    pub boost: BoostParams,
    pub linear: LinearParams,
}

impl LearnerParams {
    pub fn validate(&self) -> Result<()> {
        self.forest.validate()?;
        self.boost.validate()?;
        self.linear.validate()
    }

    /// Re-seeds every learner from one seed (streams 0, 1, 2).
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.forest.seed = crate::rng::derive(seed, 0);
        out.boost.seed = crate::rng::derive(seed, 1);
        out.linear.seed = crate::rng::derive(seed, 2);
        out
    }
}

/// Shared preconditions for every `fit`: a rectangular non-empty matrix,
/// matching labels below `n_classes`, and at least two distinct classes.
pub(crate) fn check_training_set(x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Config("at least two training rows are required".into()));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::Config("training rows have no features".into()));
    }
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::WidthMismatch {
            expected: d,
            got: row.len(),
        });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config("training matrix contains non-finite values".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Config(format!("label {bad} is out of range for {n_classes} classes")));
    }
    if y.iter().all(|&c| c == y[0]) {
        return Err(Error::DegenerateLabels);
    }
    Ok(d)
}

pub(crate) fn check_width(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::WidthMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::rng::SplitMix64;

    /// `per_class` points around each of `k` centers spaced `spread` apart in 2-D.
    pub fn blobs(k: usize, per_class: usize, spread: f64, noise: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = SplitMix64::new(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for c in 0..k {
            let angle = std::f64::consts::TAU * c as f64 / k as f64;
            let (cx, cy) = (spread * angle.cos(), spread * angle.sin());
            for _ in 0..per_class {
                x.push(vec![cx + noise * rng.normal(), cy + noise * rng.normal()]);
                y.push(c);
            }
        }
        (x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let p = softmax(&[1.0, 0.0]);
        // e / (e + 1) = 0.731058578630004879...
        assert!((p.as_slice()[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((p.as_slice()[1] - 0.268_941_421_369_995_1).abs() < 1e-12);
        let q = softmax(&[2.0, -2.0]);
        assert!((q.as_slice()[0] - 0.9820).abs() < 1e-4);
        assert!((q.as_slice()[1] - 0.0180).abs() < 1e-4);
        assert_eq!(softmax(&[3.0; 4]).as_slice(), &[0.25; 4]);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[0.3, -1.2, 2.5]);
        let b = softmax(&[100.3, 98.8, 102.5]);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn class_probabilities_validate() {
        assert!(ClassProbabilities::new(vec![0.5, 0.5]).is_ok());
        assert!(ClassProbabilities::new(vec![0.5, 0.6]).is_err());
        assert!(ClassProbabilities::new(vec![-0.1, 1.1]).is_err());
        assert!(ClassProbabilities::new(vec![]).is_err());
        assert_eq!(ClassProbabilities::new(vec![0.2, 0.4, 0.4]).unwrap().argmax(), 1);
    }

    #[test]
    fn training_set_checks() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(check_training_set(&x, &[1, 1], 2), Err(Error::DegenerateLabels)));
        assert!(check_training_set(&x, &[0], 2).is_err());
        assert!(check_training_set(&x, &[0, 2], 2).is_err());
        assert_eq!(check_training_set(&x, &[0, 1], 2).unwrap(), 1);
    }
}
