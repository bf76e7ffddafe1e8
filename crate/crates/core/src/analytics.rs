//! Pluralism and quality analytics: classification metrics, entropy,
//! pairwise overlap, confidence strata, school aggregation, ternary
//! coordinates and a PCA projection.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::case::PriorSimplex;
use crate::error::{Error, Result};
use crate::learners::ClassProbabilities;
use crate::stack::StackPrediction;
use crate::taxonomy::{NormativeSchool, Subtheory, NUM_SUBTHEORIES};

/// Shannon entropy in nats; divided by `ln K` when `normalized`.
pub fn entropy(dist: &[f64], normalized: bool) -> f64 {
    let h: f64 = dist.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    if normalized {
        if dist.len() < 2 {
            0.0
        } else {
            h / (dist.len() as f64).ln()
        }
    } else {
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: String,
    pub n: usize,
    pub exact_match_accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub mean_entropy_raw: f64,
    pub mean_entropy_calibrated: f64,
    pub mean_entropy_raw_normalized: f64,
    pub mean_entropy_calibrated_normalized: f64,
}

fn class_name(k: usize, n_classes: usize) -> String {
    match Subtheory::from_index(k) {
        Some(s) if n_classes == NUM_SUBTHEORIES => s.name().to_string(),
        _ => format!("class_{k}"),
    }
}

/// Accuracy, macro F1 and per-class metrics from a square confusion matrix.
/// A class whose precision and recall are both zero (or undefined) has F1 0.
pub fn confusion_metrics(confusion: &[Vec<usize>]) -> (f64, f64, Vec<ClassMetrics>) {
    let k = confusion.len();
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|i| {
            let support: usize = confusion[i].iter().sum();
            let predicted: usize = (0..k).map(|r| confusion[r][i]).sum();
            let tp = confusion[i][i] as f64;
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let recall = if support > 0 { tp / support as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: class_name(i, k),
                support,
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let accuracy = if total > 0 { correct as f64 / total as f64 } else { 0.0 };
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / k.max(1) as f64;
    (accuracy, macro_f1, per_class)
}

pub fn confusion_matrix(predicted: &[usize], labels: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    if predicted.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: labels.len(),
        });
    }
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&p, &t) in predicted.iter().zip(labels) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::Config(format!("class index out of range for {n_classes} classes")));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Metrics for `K`-class distributions; both entropy pairs are computed from
/// the same distributions.
pub fn evaluate(dists: &[ClassProbabilities], labels: &[usize], n_classes: usize) -> Result<EvalReport> {
    evaluate_pairs(dists, dists, labels, n_classes)
}

fn evaluate_pairs(
    raw: &[ClassProbabilities],
    calibrated: &[ClassProbabilities],
    labels: &[usize],
    n_classes: usize,
) -> Result<EvalReport> {
    if calibrated.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: calibrated.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Config("cannot evaluate an empty prediction set".into()));
    }
    let predicted: Vec<usize> = calibrated.iter().map(ClassProbabilities::argmax).collect();
    let confusion = confusion_matrix(&predicted, labels, n_classes)?;
    let (accuracy, macro_f1, per_class) = confusion_metrics(&confusion);
    let n = labels.len() as f64;
    let mean = |ds: &[ClassProbabilities], norm: bool| ds.iter().map(|d| entropy(d.as_slice(), norm)).sum::<f64>() / n;
    Ok(EvalReport {
        config: String::new(),
        n: labels.len(),
        exact_match_accuracy: accuracy,
        macro_f1,
        per_class,
        confusion,
        mean_entropy_raw: mean(raw, false),
        mean_entropy_calibrated: mean(calibrated, false),
        mean_entropy_raw_normalized: mean(raw, true),
        mean_entropy_calibrated_normalized: mean(calibrated, true),
    })
}

/// Report for stack predictions: accuracy from the calibrated argmax, entropies
/// before and after calibration.
pub fn evaluate_predictions(preds: &[StackPrediction], labels: &[Subtheory]) -> Result<EvalReport> {
    let raw: Vec<ClassProbabilities> = preds.iter().map(|p| p.raw.clone()).collect();
    let cal: Vec<ClassProbabilities> = preds.iter().map(|p| p.calibrated.clone()).collect();
    let y: Vec<usize> = labels.iter().map(|s| s.index()).collect();
    evaluate_pairs(&raw, &cal, &y, NUM_SUBTHEORIES)
}

/// Symmetric pairwise confusion frequencies with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix(pub Vec<Vec<f64>>);

impl OverlapMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `O[i][j] = (c_ij + c_ji) / (n_i + n_j)` off the diagonal, `n_i` the row total.
pub fn overlap_matrix(confusion: &[Vec<usize>]) -> OverlapMatrix {
    let k = confusion.len();
    let totals: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let o = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let denom = totals[i] + totals[j];
                    if i == j || denom == 0 {
                        0.0
                    } else {
                        (confusion[i][j] + confusion[j][i]) as f64 / denom as f64
                    }
                })
                .collect()
        })
        .collect();
    OverlapMatrix(o)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bridge {
    pub first: Subtheory,
    pub second: Subtheory,
    pub score: f64,
    pub same_school: bool,
}

/// The `top_k` highest-scoring unordered pairs with a positive score. Equal
/// scores keep canonical pair order (`i < j`, row-major).
pub fn bridge_theories(overlap: &OverlapMatrix, top_k: usize) -> Vec<Bridge> {
    let k = overlap.len().min(NUM_SUBTHEORIES);
    let mut pairs: Vec<Bridge> = (0..k)
        .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
        .filter(|&(i, j)| overlap.get(i, j) > 0.0)
        .map(|(i, j)| {
            let (a, b) = (Subtheory::ALL[i], Subtheory::ALL[j]);
            Bridge {
                first: a,
                second: b,
                score: overlap.get(i, j),
                same_school: a.school() == b.school(),
            }
        })
        .collect();
    pairs.sort_by(|x, y| y.score.total_cmp(&x.score));
    pairs.truncate(top_k);
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub low: f64,
    pub high: f64,
    pub count: usize,
    pub coverage: f64,
    /// `None` for an empty bin.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceStrata {
    pub bin_width: f64,
    pub bins: Vec<Stratum>,
}

/// Bins top-1 confidence into `[0,w), [w,2w), ..., [1-w, 1]`.
pub fn confidence_strata(preds: &[ClassProbabilities], labels: &[usize], bin_width: f64) -> Result<ConfidenceStrata> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: labels.len(),
        });
    }
    let n_bins = (1.0 / bin_width).round();
    if !(bin_width > 0.0) || n_bins < 1.0 || (n_bins * bin_width - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("bin width {bin_width} does not divide 1")));
    }
    let n_bins = n_bins as usize;
    let mut counts = vec![0usize; n_bins];
    let mut hits = vec![0usize; n_bins];
    for (p, &y) in preds.iter().zip(labels) {
        let top = p.as_slice()[p.argmax()];
        let bin = ((top * n_bins as f64 + 1e-12).floor() as usize).min(n_bins - 1);
        counts[bin] += 1;
        if p.argmax() == y {
            hits[bin] += 1;
        }
    }
    let total = preds.len();
    let bins = (0..n_bins)
        .map(|b| Stratum {
            low: b as f64 / n_bins as f64,
            high: (b + 1) as f64 / n_bins as f64,
            count: counts[b],
            coverage: if total > 0 { counts[b] as f64 / total as f64 } else { 0.0 },
            accuracy: (counts[b] > 0).then(|| hits[b] as f64 / counts[b] as f64),
        })
        .collect();
    Ok(ConfidenceStrata { bin_width, bins })
}

/// Sums the five subtheory probabilities of each school.
pub fn school_aggregate(dist: &[f64]) -> Result<PriorSimplex> {
    if dist.len() != NUM_SUBTHEORIES {
        return Err(Error::NotADistribution(format!("expected 15 entries, got {}", dist.len())));
    }
    let mut s = [0.0; 3];
    for sub in Subtheory::ALL {
        s[sub.school().index()] += dist[sub.index()];
    }
    // A near-certain school can sum a few ulps past 1.
    PriorSimplex::new(s[0].min(1.0), s[1].min(1.0), s[2].min(1.0))
}

/// Ternary coordinates with alpha at (0, 0), gamma at (1, 0) and beta at the apex.
pub fn simplex_coords(p: &PriorSimplex) -> (f64, f64) {
    let beta = p.component(NormativeSchool::VirtueEthics);
    let gamma = p.component(NormativeSchool::Deontology);
    (gamma + beta / 2.0, beta * 3f64.sqrt() / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Unit principal axes, one row per component.
    pub components: [Vec<f64>; 2],
    /// Covariance eigenvalues of the two components.
    pub explained_variance: [f64; 2],
    /// Share of total variance captured by the two components.
    pub variance_share: f64,
}

const DEGENERATE: f64 = 1e-12;

/// Deterministic two-component PCA on the population covariance. Each axis
/// is signed so its largest-magnitude loading is positive (the lower index
/// wins ties).
pub fn project_2d(rows: &[Vec<f64>]) -> Result<Projection> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::Projection(format!("need at least 3 rows, got {n}")));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Projection("rows have unequal widths".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Projection("non-finite entries".into()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = (centered.transpose() * &centered) / n as f64;
    let varying = (0..d).filter(|&j| cov[(j, j)] > DEGENERATE).count();
    if varying < 2 {
        return Err(Error::Projection(format!(
            "fewer than 2 non-degenerate dimensions ({varying} of {d} vary)"
        )));
    }

    let eig = SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = cov.trace();
    let axis = |k: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(order[k]);
        let lead = (0..d).fold(0, |best, j| if col[j].abs() > col[best].abs() { j } else { best });
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        col.iter().map(|v| v * sign).collect()
    };
    let components = [axis(0), axis(1)];
    let explained_variance = [eig.eigenvalues[order[0]].max(0.0), eig.eigenvalues[order[1]].max(0.0)];
    let coords = (0..n)
        .map(|i| {
            let row = centered.row(i);
            let proj = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [proj(&components[0]), proj(&components[1])]
        })
        .collect();
    Ok(Projection {
        coords,
        components,
        explained_variance,
        variance_share: (explained_variance[0] + explained_variance[1]) / total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_class_hand_fixture() {
        let (acc, f1, per) = confusion_metrics(&[vec![1, 1], vec![0, 2]]);
        assert_eq!(acc, 0.75);
        // class 0: p=1, r=1/2 -> 2/3; class 1: p=2/3, r=1 -> 0.8
        assert!((per[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((per[1].f1 - 0.8).abs() < 1e-15);
        assert!((f1 - 0.733_333_333_333_333_3).abs() < 1e-12);
    }

    #[test]
    fn evaluate_counts_argmax() {
        let d = |v: Vec<f64>| ClassProbabilities::new(v).unwrap();
        let preds = vec![d(vec![0.9, 0.1]), d(vec![0.4, 0.6]), d(vec![0.2, 0.8]), d(vec![0.3, 0.7])];
        let r = evaluate(&preds, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.confusion, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(r.exact_match_accuracy, 0.75);
        assert!(evaluate(&preds, &[0], 2).is_err());
    }

    #[test]
    fn entropy_values() {
        let u = vec![1.0 / 15.0; 15];
        assert!((entropy(&u, false) - 2.708_050_201_102_21).abs() < 1e-12);
        assert!((entropy(&u, true) - 1.0).abs() < 1e-12);
        let mut one = vec![0.0; 15];
        one[4] = 1.0;
        assert_eq!(entropy(&one, false), 0.0);
    }

    #[test]
    fn overlap_hand_case() {
        let mut c = vec![vec![0usize; 15]; 15];
        c[2][2] = 26;
        c[2][7] = 3;
        c[2][0] = 1;
        c[7][7] = 29;
        c[7][2] = 1;
        let o = overlap_matrix(&c);
        assert!((o.get(2, 7) - 4.0 / 60.0).abs() < 1e-15);
        assert_eq!(o.get(2, 7), o.get(7, 2));
        assert_eq!(o.get(2, 2), 0.0);
        let top = bridge_theories(&o, 5);
        assert_eq!((top[0].first, top[0].second), (Subtheory::ALL[2], Subtheory::ALL[7]));
        assert_eq!(top.len(), 2);
    }

    #[test]
    fn bridges_of_zero_matrix_are_empty() {
        assert!(bridge_theories(&OverlapMatrix(vec![vec![0.0; 15]; 15]), 5).is_empty());
    }

    #[test]
    fn strata_hand_fixture() {
        let d = |v: Vec<f64>| ClassProbabilities::new(v).unwrap();
        let preds = vec![
            d(vec![0.4, 0.3, 0.3]),
            d(vec![0.3, 0.4, 0.3]),
            d(vec![0.9, 0.05, 0.05]),
            d(vec![0.0, 1.0, 0.0]),
        ];
        let s = confidence_strata(&preds, &[0, 0, 0, 1], 0.5).unwrap();
        assert_eq!(s.bins.len(), 2);
        assert_eq!((s.bins[0].coverage, s.bins[1].coverage), (0.5, 0.5));
        assert_eq!((s.bins[0].accuracy, s.bins[1].accuracy), (Some(0.5), Some(1.0)));
        let fine = confidence_strata(&preds, &[0, 0, 0, 1], 0.1).unwrap();
        assert_eq!(fine.bins[9].count, 2);
        assert_eq!(fine.bins[0].accuracy, None);
        assert!((fine.bins.iter().map(|b| b.coverage).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(confidence_strata(&preds, &[0, 0, 0, 1], 0.3).is_err());
    }

    #[test]
    fn aggregate_and_coords() {
        let p = school_aggregate(&[1.0 / 15.0; 15]).unwrap();
        assert_eq!(p.components(), [1.0 / 3.0; 3]);
        let mut k = vec![0.0; 15];
        k[Subtheory::ALL.iter().position(|s| s.name() == "Kantian Deontology").unwrap()] = 1.0;
        assert_eq!(school_aggregate(&k).unwrap().components(), [0.0, 0.0, 1.0]);
        let mut near = [0.0; 15];
        near[..5].copy_from_slice(&[0.2, 0.2, 0.2, 0.2, 0.2 + 4e-16]);
        assert!(school_aggregate(&near).unwrap().components()[0] <= 1.0);
        assert_eq!(simplex_coords(&PriorSimplex::new(1.0, 0.0, 0.0).unwrap()), (0.0, 0.0));
        assert_eq!(simplex_coords(&PriorSimplex::new(0.0, 0.0, 1.0).unwrap()), (1.0, 0.0));
        let (x, y) = simplex_coords(&PriorSimplex::uniform());
        assert!((x - 0.5).abs() < 1e-15);
        assert!((y - 0.288_675_134_594_812_9).abs() < 1e-12);
    }

    #[test]
    fn pca_rotation_preserves_distances() {
        let rows = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.5, -1.5], vec![-0.5, -1.0]];
        let mean = [0.0, 0.0];
        let centered: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] - mean[0], r[1] - mean[1]]).collect();
        let p = project_2d(&centered).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let a = ((centered[i][0] - centered[j][0]).powi(2) + (centered[i][1] - centered[j][1]).powi(2)).sqrt();
                let b = ((p.coords[i][0] - p.coords[j][0]).powi(2) + (p.coords[i][1] - p.coords[j][1]).powi(2)).sqrt();
                assert!((a - b).abs() < 1e-9);
            }
        }
        assert!((p.variance_share - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_rank_one_and_errors() {
        let dir = [1.0, -2.0, 0.5, 3.0, 1.5];
        let rows: Vec<Vec<f64>> = (0..8).map(|i| dir.iter().map(|d| d * (i as f64 - 3.0)).collect()).collect();
        let p = project_2d(&rows).unwrap();
        assert!(p.explained_variance[1] <= 1e-12);
        assert!(project_2d(&rows[..2]).is_err());
        let flat: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 1.0]).collect();
        assert!(matches!(project_2d(&flat), Err(Error::Projection(_))));
    }
}
