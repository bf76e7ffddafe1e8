use serde::{Deserialize, Serialize};

use super::tree::{grow, Gini, GrowParams, SortedColumns, TreeNode};
use super::{check_training_set, check_width, ClassProbabilities};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of features drawn as split candidates at each node.
    pub feature_fraction: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: 12,
            min_leaf: 1,
            feature_fraction: 0.3,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::Config("forest counts must be positive".into()));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::Config("forest feature_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Bagged CART trees with class-distribution leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub trees: Vec<TreeNode<Vec<f64>>>,
}

pub fn forest_fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: &ForestParams) -> Result<ForestModel> {
    params.validate()?;
    let d = check_training_set(x, y, n_classes)?;
    let n = x.len();
    let cols = SortedColumns::new(x);
    let candidates = ((params.feature_fraction * d as f64).ceil() as usize).clamp(1, d);
    let grow_params = GrowParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf as f64,
        features_per_node: Some(candidates),
    };

    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = SplitMix64::stream(params.seed, t as u64);
            let mut weights = vec![0.0; n];
            for _ in 0..n {
                weights[rng.below(n)] += 1.0;
            }
            let gini = Gini {
                labels: y,
                weights: &weights,
                n_classes,
            };
            let leaf = |rows: &[usize]| {
                let mut dist = vec![0.0; n_classes];
                let mut total = 0.0;
                for &r in rows {
                    dist[y[r]] += weights[r];
                    total += weights[r];
                }
                dist.iter_mut().for_each(|p| *p /= total);
                dist
            };
            grow(&cols, &weights, &gini, &grow_params, Some(&mut rng), leaf)
        })
        .collect();

    Ok(ForestModel {
        n_features: d,
        n_classes,
        trees,
    })
}

/// Unweighted mean of the per-tree leaf distributions.
pub fn forest_predict(model: &ForestModel, x: &[f64]) -> Result<ClassProbabilities> {
    check_width(model.n_features, x)?;
    let mut acc = vec![0.0; model.n_classes];
    for tree in &model.trees {
        for (a, p) in acc.iter_mut().zip(tree.leaf_for(x)) {
            *a += p;
        }
    }
    let n = model.trees.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    ClassProbabilities::new(acc)
}
