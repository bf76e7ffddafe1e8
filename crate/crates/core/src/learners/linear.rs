use serde::{Deserialize, Serialize};

use super::{check_training_set, check_width, softmax, ClassProbabilities};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams {
            lambda: 1e-3,
            epochs: 30,
            seed: 0,
        }
    }
}

impl LinearParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || self.epochs == 0 {
            return Err(Error::Config("linear learner needs lambda > 0 and epochs > 0".into()));
        }
        Ok(())
    }
}

/// One-vs-rest hinge-loss classifier. The bias is the weight of an implicit
/// constant feature and is regularized with the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub n_features: usize,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn margins(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `lambda / 2 * |w|^2 + mean hinge` for the binary problem `class` vs rest,
/// evaluated at `(w, b)` with the bias treated as a regularized weight.
pub fn linear_objective(x: &[Vec<f64>], y: &[usize], class: usize, lambda: f64, w: &[f64], b: f64) -> f64 {
    let reg = 0.5 * lambda * (dot(w, w) + b * b);
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let label = if yi == class { 1.0 } else { -1.0 };
            (1.0 - label * (dot(w, xi) + b)).max(0.0)
        })
        .sum();
    reg + hinge / x.len() as f64
}

/// Stochastic subgradient descent on the regularized hinge loss with step
/// `1 / (lambda t)`, projection onto the `1/sqrt(lambda)` ball, and the
/// average of all iterates as the returned weights.
pub fn linear_fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: &LinearParams) -> Result<LinearModel> {
    params.validate()?;
    let d = check_training_set(x, y, n_classes)?;
    let n = x.len();
    let lambda = params.lambda;
    let radius = 1.0 / lambda.sqrt();

    let mut weights = Vec::with_capacity(n_classes);
    let mut bias = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let mut rng = SplitMix64::stream(params.seed, class as u64);
        // Last slot of `w` is the bias.
        let mut w = vec![0.0; d + 1];
        let mut avg = vec![0.0; d + 1];
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0usize;
        for _ in 0..params.epochs {
            rng.shuffle(&mut order);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let label = if y[i] == class { 1.0 } else { -1.0 };
                let margin = label * (dot(&w[..d], &x[i]) + w[d]);
                let shrink = 1.0 - eta * lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (wj, xj) in w[..d].iter_mut().zip(&x[i]) {
                        *wj += eta * label * xj;
                    }
                    w[d] += eta * label;
                }
                let norm = dot(&w, &w).sqrt();
                if norm > radius {
                    let s = radius / norm;
                    w.iter_mut().for_each(|v| *v *= s);
                }
                for (a, v) in avg.iter_mut().zip(&w) {
                    *a += v;
                }
            }
        }
        avg.iter_mut().for_each(|a| *a /= t as f64);
        bias.push(avg[d]);
        avg.truncate(d);
        weights.push(avg);
    }

    Ok(LinearModel {
        n_features: d,
        weights,
        bias,
    })
}

/// Softmax over the per-class margins.
pub fn linear_predict(model: &LinearModel, x: &[f64]) -> Result<ClassProbabilities> {
    check_width(model.n_features, x)?;
    Ok(softmax(&model.margins(x)))
}
