//! CART-style tree growth over presorted columns.
//!
//! Trees grow level by level. For each feature, one pass over the rows in
//! ascending value order updates the left-side statistics of every open
//! node at once, so a level costs O(features x rows) regardless of how many
//! nodes it holds. Splits send `x[feature] <= threshold` left.

use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode<L> {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode<L>>,
        right: Box<TreeNode<L>>,
    },
    Leaf {
        value: L,
    },
}

impl<L> TreeNode<L> {
    pub fn leaf_for(&self, x: &[f64]) -> &L {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

/// Column-major copy of the training matrix with per-feature row orderings.
pub(crate) struct SortedColumns {
    values: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
    /// `sorted[f][i] = values[f][order[f][i]]`.
    sorted: Vec<Vec<f64>>,
}

impl SortedColumns {
    pub fn new(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let values: Vec<Vec<f64>> = (0..d).map(|f| x.iter().map(|r| r[f]).collect()).collect();
        let order = values
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                // Stable sort keeps equal values in row order.
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect::<Vec<Vec<u32>>>();
        let sorted = order
            .iter()
            .zip(&values)
            .map(|(idx, col)| idx.iter().map(|&i| col[i as usize]).collect())
            .collect();
        SortedColumns { values, order, sorted }
    }

    pub fn n_features(&self) -> usize {
        self.values.len()
    }
}

/// Split quality over additive per-row statistics.
pub(crate) trait Criterion {
    type Acc: Clone;

    fn empty(&self) -> Self::Acc;
    /// Adds `row` to `acc`; `total` is the node-wide accumulator.
    fn push(&self, acc: &mut Self::Acc, total: &Self::Acc, row: usize);
    fn weight(&self, acc: &Self::Acc) -> f64;
    /// Split score; the impurity decrease is `score - base(total)`.
    fn score(&self, left: &Self::Acc, total: &Self::Acc) -> f64;
    fn base(&self, total: &Self::Acc) -> f64;

    /// Impurity decrease from splitting `total` into `left` and the remainder.
    #[cfg(test)]
    fn gain(&self, left: &Self::Acc, total: &Self::Acc) -> f64 {
        self.score(left, total) - self.base(total)
    }

    fn total(&self, rows: &[usize]) -> Self::Acc {
        let scratch = self.empty();
        let mut acc = self.empty();
        for &r in rows {
            self.push(&mut acc, &scratch, r);
        }
        acc
    }
}

/// Weighted Gini impurity over class labels.
pub(crate) struct Gini<'a> {
    pub labels: &'a [usize],
    pub weights: &'a [f64],
    pub n_classes: usize,
}

#[derive(Clone)]
pub(crate) struct GiniAcc {
    counts: Vec<f64>,
    weight: f64,
    /// Sum of squared class weights.
    sq: f64,
    /// Sum over classes of left count times node count.
    cross: f64,
}

impl Criterion for Gini<'_> {
    type Acc = GiniAcc;

    fn empty(&self) -> GiniAcc {
        GiniAcc {
            counts: vec![0.0; self.n_classes],
            weight: 0.0,
            sq: 0.0,
            cross: 0.0,
        }
    }

    fn push(&self, acc: &mut GiniAcc, total: &GiniAcc, row: usize) {
        let k = self.labels[row];
        let w = self.weights[row];
        acc.sq += 2.0 * acc.counts[k] * w + w * w;
        acc.cross += total.counts[k] * w;
        acc.counts[k] += w;
        acc.weight += w;
    }

    fn weight(&self, acc: &GiniAcc) -> f64 {
        acc.weight
    }

    // weight * gini = weight - sq / weight, so the decrease is
    // sq_L / w_L + sq_R / w_R - sq_T / w_T.
    fn score(&self, left: &GiniAcc, total: &GiniAcc) -> f64 {
        let (wl, wr) = (left.weight, total.weight - left.weight);
        let sq_right = total.sq - 2.0 * left.cross + left.sq;
        (left.sq * wr + sq_right * wl) / (wl * wr)
    }

    fn base(&self, total: &GiniAcc) -> f64 {
        total.sq / total.weight
    }
}

/// Squared-error reduction on a per-row target; reference for the histogram grower.
#[cfg(test)]
pub(crate) struct SquaredError<'a> {
    pub target: &'a [f64],
    pub weights: &'a [f64],
}

#[cfg(test)]
#[derive(Clone)]
pub(crate) struct SumAcc {
    sum: f64,
    weight: f64,
}

#[cfg(test)]
impl Criterion for SquaredError<'_> {
    type Acc = SumAcc;

    fn empty(&self) -> SumAcc {
        SumAcc { sum: 0.0, weight: 0.0 }
    }

    fn push(&self, acc: &mut SumAcc, _total: &SumAcc, row: usize) {
        let w = self.weights[row];
        acc.sum += w * self.target[row];
        acc.weight += w;
    }

    fn weight(&self, acc: &SumAcc) -> f64 {
        acc.weight
    }

    fn score(&self, left: &SumAcc, total: &SumAcc) -> f64 {
        let (wl, wr) = (left.weight, total.weight - left.weight);
        let sr = total.sum - left.sum;
        (left.sum * left.sum * wr + sr * sr * wl) / (wl * wr)
    }

    fn base(&self, total: &SumAcc) -> f64 {
        total.sum * total.sum / total.weight
    }
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    /// Minimum total row weight on each side of a split.
    pub min_leaf: f64,
    /// Features drawn per node; `None` considers all of them.
    pub features_per_node: Option<usize>,
}

pub(crate) const MIN_GAIN: f64 = 1e-12;
const INACTIVE: u32 = u32::MAX;

enum ArenaNode<L> {
    Pending,
    Leaf(L),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

struct Open<A> {
    arena: usize,
    rows: Vec<usize>,
    total: A,
}

#[derive(Clone, Copy)]
struct Best {
    score: f64,
    feature: usize,
    threshold: f64,
}

pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Grows one tree over the rows with positive weight.
///
/// `make_leaf` receives the rows that reach a leaf. `rng` is only consulted
/// when `features_per_node` is set.
pub(crate) fn grow<C, L>(
    cols: &SortedColumns,
    weights: &[f64],
    criterion: &C,
    params: &GrowParams,
    mut rng: Option<&mut SplitMix64>,
    make_leaf: impl Fn(&[usize]) -> L,
) -> TreeNode<L>
where
    C: Criterion,
{
    let d = cols.n_features();
    let n = weights.len();
    let mut arena: Vec<ArenaNode<L>> = vec![ArenaNode::Pending];
    let root_rows: Vec<usize> = (0..n).filter(|&r| weights[r] > 0.0).collect();
    let root_total = criterion.total(&root_rows);
    let mut frontier = vec![Open {
        arena: 0,
        rows: root_rows,
        total: root_total,
    }];
    let mut node_of = vec![INACTIVE; n];

    for depth in 0.. {
        if frontier.is_empty() {
            break;
        }
        // Nodes that cannot split become leaves right away.
        let (open, done): (Vec<_>, Vec<_>) = frontier.into_iter().partition(|node| {
            depth < params.max_depth
                && node.rows.len() >= 2
                && criterion.weight(&node.total) >= 2.0 * params.min_leaf
        });
        for node in done {
            arena[node.arena] = ArenaNode::Leaf(make_leaf(&node.rows));
        }
        if open.is_empty() {
            break;
        }

        // Flat (slot, feature) candidate mask; `None` means every feature.
        let mut candidates: Option<Vec<bool>> = None;
        let mut feature_live = vec![true; d];
        for (slot, node) in open.iter().enumerate() {
            for &r in &node.rows {
                node_of[r] = slot as u32;
            }
        }
        if let (Some(m), Some(rng)) = (params.features_per_node, rng.as_deref_mut()) {
            if m < d {
                let mut mask = vec![false; open.len() * d];
                feature_live = vec![false; d];
                for slot in 0..open.len() {
                    for f in rng.sample_indices(d, m) {
                        mask[slot * d + f] = true;
                        feature_live[f] = true;
                    }
                }
                candidates = Some(mask);
            }
        }

        // A split must beat the parent's base score by MIN_GAIN.
        let mut best: Vec<Best> = open
            .iter()
            .map(|node| Best {
                score: criterion.base(&node.total) + MIN_GAIN,
                feature: usize::MAX,
                threshold: 0.0,
            })
            .collect();
        let mut left: Vec<C::Acc> = vec![criterion.empty(); open.len()];
        let mut last = vec![f64::NAN; open.len()];
        for f in (0..d).filter(|&f| feature_live[f]) {
            for (slot, acc) in left.iter_mut().enumerate() {
                *acc = criterion.empty();
                last[slot] = f64::NAN;
            }
            for (&r, &v) in cols.order[f].iter().zip(&cols.sorted[f]) {
                let r = r as usize;
                let slot = node_of[r];
                if slot == INACTIVE {
                    continue;
                }
                let slot = slot as usize;
                if let Some(mask) = &candidates {
                    if !mask[slot * d + f] {
                        continue;
                    }
                }
                let total = &open[slot].total;
                if v > last[slot] {
                    let wl = criterion.weight(&left[slot]);
                    let wr = criterion.weight(total) - wl;
                    if wl >= params.min_leaf && wr >= params.min_leaf && wl > 0.0 {
                        let score = criterion.score(&left[slot], total);
                        if score > best[slot].score {
                            best[slot] = Best {
                                score,
                                feature: f,
                                threshold: midpoint(last[slot], v),
                            };
                        }
                    }
                }
                criterion.push(&mut left[slot], total, r);
                last[slot] = v;
            }
        }

        let mut next = Vec::new();
        for (slot, node) in open.into_iter().enumerate() {
            for &r in &node.rows {
                node_of[r] = INACTIVE;
            }
            let split = best[slot];
            if split.feature == usize::MAX {
                arena[node.arena] = ArenaNode::Leaf(make_leaf(&node.rows));
                continue;
            }
            let (lrows, rrows): (Vec<usize>, Vec<usize>) = node
                .rows
                .iter()
                .partition(|&&r| cols.values[split.feature][r] <= split.threshold);
            let li = arena.len();
            arena.push(ArenaNode::Pending);
            arena.push(ArenaNode::Pending);
            arena[node.arena] = ArenaNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: li,
                right: li + 1,
            };
            let lt = criterion.total(&lrows);
            let rt = criterion.total(&rrows);
            next.push(Open { arena: li, rows: lrows, total: lt });
            next.push(Open { arena: li + 1, rows: rrows, total: rt });
        }
        frontier = next;
    }

    into_nested(&mut arena, 0)
}

fn into_nested<L>(arena: &mut Vec<ArenaNode<L>>, idx: usize) -> TreeNode<L> {
    match std::mem::replace(&mut arena[idx], ArenaNode::Pending) {
        ArenaNode::Leaf(value) => TreeNode::Leaf { value },
        ArenaNode::Split {
            feature,
            threshold,
            left,
            right,
        } => TreeNode::Split {
            feature,
            threshold,
            left: Box::new(into_nested(arena, left)),
            right: Box::new(into_nested(arena, right)),
        },
        ArenaNode::Pending => unreachable!("tree node left unresolved"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_leaf(labels: &[usize], k: usize) -> impl Fn(&[usize]) -> Vec<f64> + '_ {
        move |rows| {
            let mut c = vec![0.0; k];
            for &r in rows {
                c[labels[r]] += 1.0;
            }
            let n: f64 = c.iter().sum();
            c.into_iter().map(|x| x / n).collect()
        }
    }

    #[test]
    fn single_threshold_split() {
        let x: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 10.0, 11.0, 12.0].iter().map(|&v| vec![v]).collect();
        let y = [0, 0, 0, 1, 1, 1];
        let w = [1.0; 6];
        let cols = SortedColumns::new(&x);
        let gini = Gini { labels: &y, weights: &w, n_classes: 2 };
        let params = GrowParams { max_depth: 5, min_leaf: 1.0, features_per_node: None };
        let tree = grow(&cols, &w, &gini, &params, None, class_leaf(&y, 2));
        match &tree {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 6.5);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(tree.n_leaves(), 2);
        assert_eq!(tree.leaf_for(&[0.0]), &vec![1.0, 0.0]);
        assert_eq!(tree.leaf_for(&[20.0]), &vec![0.0, 1.0]);
    }

    #[test]
    fn gini_gain_matches_direct_formula() {
        // Node: classes [0,0,1,1,1], left = first two rows.
        let y = [0, 0, 1, 1, 1];
        let w = [1.0, 2.0, 1.0, 1.0, 3.0];
        let gini = Gini { labels: &y, weights: &w, n_classes: 2 };
        let total = gini.total(&[0, 1, 2, 3, 4]);
        let mut left = gini.empty();
        for r in [0, 2] {
            gini.push(&mut left, &total, r);
        }
        let impurity = |c: &[f64]| {
            let n: f64 = c.iter().sum();
            n * (1.0 - c.iter().map(|x| (x / n).powi(2)).sum::<f64>())
        };
        let expected = impurity(&[3.0, 5.0]) - impurity(&[1.0, 1.0]) - impurity(&[2.0, 4.0]);
        assert!((gini.gain(&left, &total) - expected).abs() < 1e-12);
    }

    #[test]
    fn depth_limit_is_respected() {
        let x: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..32).map(|i| i % 2).collect();
        let w = vec![1.0; 32];
        let cols = SortedColumns::new(&x);
        let gini = Gini { labels: &y, weights: &w, n_classes: 2 };
        let params = GrowParams { max_depth: 3, min_leaf: 1.0, features_per_node: None };
        let tree = grow(&cols, &w, &gini, &params, None, class_leaf(&y, 2));
        assert!(tree.depth() <= 3);
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| vec![v]).collect();
        let y = [0, 1, 0, 1];
        let w = [1.0, 0.0, 1.0, 0.0];
        let cols = SortedColumns::new(&x);
        let gini = Gini { labels: &y, weights: &w, n_classes: 2 };
        let params = GrowParams { max_depth: 4, min_leaf: 1.0, features_per_node: None };
        let tree = grow(&cols, &w, &gini, &params, None, class_leaf(&y, 2));
        assert_eq!(tree.n_leaves(), 1);
        assert_eq!(tree.leaf_for(&[2.0]), &vec![1.0, 0.0]);
    }

    #[test]
    fn midpoint_never_reaches_upper_value() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        assert_eq!(midpoint(lo, hi), lo);
        assert_eq!(midpoint(1.0, 2.0), 1.5);
    }
}
