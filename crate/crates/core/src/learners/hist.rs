//! Histogram-based regression trees for boosting.
//!
//! Each feature is bucketed once into at most [`MAX_BINS`] ordered bins cut
//! at distinct-value boundaries. When a feature has no more distinct values
//! than bins the candidate splits are exactly those of the presorted grower.

use super::tree::{TreeNode, MIN_GAIN};

pub(crate) const MAX_BINS: usize = 64;

/// Row-major bin codes plus the split threshold after every bin but the last.
pub(crate) struct BinnedColumns {
    n_features: usize,
    codes: Vec<u8>,
    thresholds: Vec<Vec<f64>>,
}

impl BinnedColumns {
    pub fn new(x: &[Vec<f64>]) -> Self {
        let n = x.len();
        let d = x.first().map_or(0, Vec::len);
        let mut codes = vec![0u8; n * d];
        let mut thresholds = Vec::with_capacity(d);
        for f in 0..d {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            let mut distinct = 0;
            for (i, &r) in order.iter().enumerate() {
                if i == 0 || x[r][f] > x[order[i - 1]][f] {
                    distinct += 1;
                }
            }
            let mut cuts = Vec::new();
            let mut bin = 0usize;
            for (i, &r) in order.iter().enumerate() {
                if i > 0 {
                    let prev = x[order[i - 1]][f];
                    let v = x[r][f];
                    // Open a new bin at a value change once this bin holds its share of rows.
                    let due = distinct <= MAX_BINS || i * MAX_BINS >= (bin + 1) * n;
                    if v > prev && due && bin + 1 < MAX_BINS {
                        cuts.push(super::tree::midpoint(prev, v));
                        bin += 1;
                    }
                }
                codes[r * d + f] = bin as u8;
            }
            thresholds.push(cuts);
        }
        BinnedColumns {
            n_features: d,
            codes,
            thresholds,
        }
    }

    fn n_bins(&self, f: usize) -> usize {
        self.thresholds[f].len() + 1
    }
}

#[derive(Clone, Copy, Default)]
struct Cell {
    sum: f64,
    weight: f64,
}

struct Open {
    arena: usize,
    rows: Vec<usize>,
    total: Cell,
}

enum ArenaNode {
    Pending,
    Leaf(Vec<usize>),
    Split {
        feature: usize,
        bin: usize,
        left: usize,
        right: usize,
    },
}

/// Grows a squared-error tree on `target` over rows with positive weight.
/// `make_leaf` receives the rows that reach each leaf.
pub(crate) fn grow_regression(
    cols: &BinnedColumns,
    target: &[f64],
    weights: &[f64],
    max_depth: usize,
    min_leaf: f64,
    make_leaf: impl Fn(&[usize]) -> f64,
) -> TreeNode<f64> {
    let d = cols.n_features;
    let offsets: Vec<usize> = (0..d)
        .scan(0, |acc, f| {
            let start = *acc;
            *acc += cols.n_bins(f);
            Some(start)
        })
        .collect();
    let cells_per_node = offsets.last().map_or(0, |&o| o + cols.n_bins(d - 1));

    let total_of = |rows: &[usize]| {
        rows.iter().fold(Cell::default(), |c, &r| Cell {
            sum: c.sum + weights[r] * target[r],
            weight: c.weight + weights[r],
        })
    };
    let root_rows: Vec<usize> = (0..weights.len()).filter(|&r| weights[r] > 0.0).collect();
    let mut arena = vec![ArenaNode::Pending];
    let mut frontier = vec![Open {
        arena: 0,
        total: total_of(&root_rows),
        rows: root_rows,
    }];
    let mut hist: Vec<Cell> = Vec::new();

    for depth in 0.. {
        if frontier.is_empty() {
            break;
        }
        let (open, done): (Vec<_>, Vec<_>) = frontier
            .into_iter()
            .partition(|n| depth < max_depth && n.rows.len() >= 2 && n.total.weight >= 2.0 * min_leaf);
        for node in done {
            arena[node.arena] = ArenaNode::Leaf(node.rows);
        }
        if open.is_empty() {
            break;
        }

        hist.clear();
        hist.resize(open.len() * cells_per_node, Cell::default());
        for (slot, node) in open.iter().enumerate() {
            let h = &mut hist[slot * cells_per_node..(slot + 1) * cells_per_node];
            for &r in &node.rows {
                let (w, g) = (weights[r], weights[r] * target[r]);
                let codes = &cols.codes[r * d..(r + 1) * d];
                for (&off, &c) in offsets.iter().zip(codes) {
                    let cell = &mut h[off + c as usize];
                    cell.sum += g;
                    cell.weight += w;
                }
            }
        }

        let mut next = Vec::new();
        for (slot, node) in open.into_iter().enumerate() {
            let h = &hist[slot * cells_per_node..(slot + 1) * cells_per_node];
            let t = node.total;
            let mut best = t.sum * t.sum / t.weight + MIN_GAIN;
            let mut choice = None;
            for f in 0..d {
                let bins = &h[offsets[f]..offsets[f] + cols.n_bins(f)];
                let mut left = Cell::default();
                for (b, cell) in bins[..bins.len() - 1].iter().enumerate() {
                    if cell.weight == 0.0 {
                        continue;
                    }
                    left.sum += cell.sum;
                    left.weight += cell.weight;
                    let wr = t.weight - left.weight;
                    if left.weight < min_leaf || wr < min_leaf || wr <= 0.0 {
                        continue;
                    }
                    let sr = t.sum - left.sum;
                    let score = (left.sum * left.sum * wr + sr * sr * left.weight) / (left.weight * wr);
                    if score > best {
                        best = score;
                        choice = Some((f, b));
                    }
                }
            }
            let Some((feature, bin)) = choice else {
                arena[node.arena] = ArenaNode::Leaf(node.rows);
                continue;
            };
            let (lrows, rrows): (Vec<usize>, Vec<usize>) = node
                .rows
                .iter()
                .partition(|&&r| cols.codes[r * d + feature] as usize <= bin);
            let li = arena.len();
            arena.push(ArenaNode::Pending);
            arena.push(ArenaNode::Pending);
            arena[node.arena] = ArenaNode::Split {
                feature,
                bin,
                left: li,
                right: li + 1,
            };
            next.push(Open {
                arena: li,
                total: total_of(&lrows),
                rows: lrows,
            });
            next.push(Open {
                arena: li + 1,
                total: total_of(&rrows),
                rows: rrows,
            });
        }
        frontier = next;
    }

    into_nested(cols, &mut arena, 0, &make_leaf)
}

fn into_nested(
    cols: &BinnedColumns,
    arena: &mut Vec<ArenaNode>,
    idx: usize,
    make_leaf: &impl Fn(&[usize]) -> f64,
) -> TreeNode<f64> {
    match std::mem::replace(&mut arena[idx], ArenaNode::Pending) {
        ArenaNode::Leaf(rows) => TreeNode::Leaf { value: make_leaf(&rows) },
        ArenaNode::Split {
            feature,
            bin,
            left,
            right,
        } => TreeNode::Split {
            feature,
            threshold: cols.thresholds[feature][bin],
            left: Box::new(into_nested(cols, arena, left, make_leaf)),
            right: Box::new(into_nested(cols, arena, right, make_leaf)),
        },
        ArenaNode::Pending => unreachable!("every arena slot is resolved before nesting"),
    }
}

#[cfg(test)]
mod tests {
    use super::super::tree::{grow, GrowParams, SortedColumns, SquaredError};
    use super::*;
    use crate::rng::SplitMix64;

    fn leaf_mean<'a>(t: &'a [f64]) -> impl Fn(&[usize]) -> f64 + 'a {
        move |rows| rows.iter().map(|&r| t[r]).sum::<f64>() / rows.len() as f64
    }

    #[test]
    fn matches_presorted_grower_on_few_distinct_values() {
        let mut rng = SplitMix64::new(5);
        let x: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..6).map(|_| (rng.next_f64() * 40.0).floor()).collect())
            .collect();
        let target: Vec<f64> = x.iter().map(|r| r[0] - 0.5 * r[3] + rng.next_f64()).collect();
        let w = vec![1.0; x.len()];
        let binned = BinnedColumns::new(&x);
        let hist_tree = grow_regression(&binned, &target, &w, 4, 1.0, leaf_mean(&target));
        let crit = SquaredError { target: &target, weights: &w };
        let params = GrowParams { max_depth: 4, min_leaf: 1.0, features_per_node: None };
        let exact = grow(&SortedColumns::new(&x), &w, &crit, &params, None, leaf_mean(&target));
        for r in &x {
            assert_eq!(hist_tree.leaf_for(r), exact.leaf_for(r));
        }
    }

    #[test]
    fn bins_are_capped_and_ordered() {
        let x: Vec<Vec<f64>> = (0..1000).map(|i| vec![(i as f64).sin()]).collect();
        let b = BinnedColumns::new(&x);
        assert!(b.n_bins(0) <= MAX_BINS);
        assert!(b.thresholds[0].windows(2).all(|w| w[0] < w[1]));
        for (r, row) in x.iter().enumerate() {
            let code = b.codes[r] as usize;
            if code > 0 {
                assert!(row[0] > b.thresholds[0][code - 1]);
            }
            if code < b.n_bins(0) - 1 {
                assert!(row[0] <= b.thresholds[0][code]);
            }
        }
    }

    #[test]
    fn constant_target_gives_single_leaf() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let t = vec![2.0; 10];
        let tree = grow_regression(&BinnedColumns::new(&x), &t, &vec![1.0; 10], 3, 1.0, leaf_mean(&t));
        assert_eq!(tree.n_leaves(), 1);
    }
}
