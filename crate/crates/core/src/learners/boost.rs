use serde::{Deserialize, Serialize};

use super::hist::{grow_regression, BinnedColumns};
use super::tree::TreeNode;
use super::{check_training_set, check_width, softmax, ClassProbabilities};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Floor on the Newton-step denominator.
const HESSIAN_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// L2 penalty added to the hessian sum in every leaf.
    #[serde(default = "default_leaf_lambda")]
    pub leaf_lambda: f64,
    /// Row fraction sampled per round; 1.0 uses every row.
    #[serde(default = "default_subsample")]
    pub subsample: f64,
}

fn default_leaf_lambda() -> f64 {
    1.0
}

fn default_subsample() -> f64 {
    1.0
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_rounds: 150,
            max_depth: 4,
            learning_rate: 0.1,
            seed: 0,
            leaf_lambda: default_leaf_lambda(),
            subsample: default_subsample(),
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::Config("boost max_depth must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("boost learning_rate must lie in (0, 1]".into()));
        }
        if !(self.leaf_lambda >= 0.0) {
            return Err(Error::Config("boost leaf_lambda must be non-negative".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config("boost subsample must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Softmax gradient boosting: one regression tree per class per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub learning_rate: f64,
    /// `rounds[r][k]` is the class-`k` tree of round `r`; leaves hold raw Newton steps.
    pub rounds: Vec<Vec<TreeNode<f64>>>,
}

impl BoostModel {
    pub fn raw_scores(&self, x: &[f64]) -> Vec<f64> {
        let mut scores = vec![0.0; self.n_classes];
        for round in &self.rounds {
            for (s, tree) in scores.iter_mut().zip(round) {
                *s += self.learning_rate * tree.leaf_for(x);
            }
        }
        scores
    }
}

fn log_loss(scores: &[Vec<f64>], y: &[usize]) -> f64 {
    scores
        .iter()
        .zip(y)
        .map(|(s, &k)| {
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - s[k]
        })
        .sum::<f64>()
        / y.len() as f64
}

pub fn boost_fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: &BoostParams) -> Result<BoostModel> {
    boost_fit_traced(x, y, n_classes, params).map(|(m, _)| m)
}

/// Like [`boost_fit`], also returning the mean training log-loss before the
/// first round followed by the loss after each round.
pub fn boost_fit_traced(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    params: &BoostParams,
) -> Result<(BoostModel, Vec<f64>)> {
    params.validate()?;
    let d = check_training_set(x, y, n_classes)?;
    let n = x.len();
    let cols = BinnedColumns::new(x);
    let mut rng = SplitMix64::new(params.seed);
    let mut scores = vec![vec![0.0; n_classes]; n];
    let mut trace = vec![log_loss(&scores, y)];
    let mut rounds = Vec::with_capacity(params.n_rounds);

    for _ in 0..params.n_rounds {
        let weights: Vec<f64> = if params.subsample < 1.0 {
            (0..n)
                .map(|_| if rng.next_f64() < params.subsample { 1.0 } else { 0.0 })
                .collect()
        } else {
            vec![1.0; n]
        };
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s).into_vec()).collect();
        let mut round = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            let grad: Vec<f64> = (0..n)
                .map(|i| (y[i] == k) as u8 as f64 - probs[i][k])
                .collect();
            let hess: Vec<f64> = (0..n).map(|i| probs[i][k] * (1.0 - probs[i][k])).collect();
            let leaf = |rows: &[usize]| {
                let g: f64 = rows.iter().map(|&r| grad[r]).sum();
                let h: f64 = rows.iter().map(|&r| hess[r]).sum();
                g / (h + params.leaf_lambda).max(HESSIAN_FLOOR)
            };
            round.push(grow_regression(&cols, &grad, &weights, params.max_depth, 1.0, leaf));
        }
        for (row, s) in x.iter().zip(scores.iter_mut()) {
            for (sk, tree) in s.iter_mut().zip(&round) {
                *sk += params.learning_rate * tree.leaf_for(row);
            }
        }
        rounds.push(round);
        trace.push(log_loss(&scores, y));
    }

    let model = BoostModel {
        n_features: d,
        n_classes,
        learning_rate: params.learning_rate,
        rounds,
    };
    Ok((model, trace))
}

pub fn boost_predict(model: &BoostModel, x: &[f64]) -> Result<ClassProbabilities> {
    check_width(model.n_features, x)?;
    Ok(softmax(&model.raw_scores(x)))
}
