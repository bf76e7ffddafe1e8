//! Normative-prior stream: the (alpha, beta, gamma) block plus plurality
//! features derived from it.

use serde::{Deserialize, Serialize};

use crate::case::PriorSimplex;
use crate::taxonomy::NormativeSchool;

/// Cap on T1/T2 when the runner-up component is zero.
pub const TOP_RATIO_CAP: f64 = 1e6;
pub const PRIOR_FEATURE_WIDTH: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorFeatures {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Gap between the largest and second-largest component.
    pub margin: f64,
    /// Shannon entropy divided by ln 3.
    pub entropy_norm: f64,
    /// Largest over second-largest component, capped at [`TOP_RATIO_CAP`].
    pub top_ratio: f64,
    pub dominant: NormativeSchool,
}

pub fn derive_prior_features(prior: &PriorSimplex) -> PriorFeatures {
    let parts = prior.components();

    // First maximal index wins, which gives the alpha > beta > gamma tie-break.
    let dominant = (0..3).fold(0, |best, i| if parts[i] > parts[best] { i } else { best });

    let mut sorted = parts;
    sorted.sort_by(|a, b| b.total_cmp(a));
    let margin = sorted[0] - sorted[1];
    let top_ratio = if sorted[1] > 0.0 {
        (sorted[0] / sorted[1]).min(TOP_RATIO_CAP)
    } else {
        TOP_RATIO_CAP
    };

    let entropy: f64 = parts
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    let entropy_norm = (entropy / 3f64.ln()).clamp(0.0, 1.0);

    PriorFeatures {
        alpha: parts[0],
        beta: parts[1],
        gamma: parts[2],
        margin,
        entropy_norm,
        top_ratio,
        dominant: NormativeSchool::ALL[dominant],
    }
}

/// `[alpha, beta, gamma, margin, entropy_norm, ln(top_ratio), onehot3(dominant)]`.
pub fn prior_feature_vector(f: &PriorFeatures) -> Vec<f64> {
    let mut v = Vec::with_capacity(PRIOR_FEATURE_WIDTH);
    v.extend([f.alpha, f.beta, f.gamma, f.margin, f.entropy_norm, f.top_ratio.ln()]);
    let mut onehot = [0.0; 3];
    onehot[f.dominant.index()] = 1.0;
    v.extend(onehot);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simplex(a: f64, b: f64, g: f64) -> PriorSimplex {
        PriorSimplex::new(a, b, g).unwrap()
    }

    #[test]
    fn vertex_features() {
        let f = derive_prior_features(&simplex(1.0, 0.0, 0.0));
        assert_eq!(f.margin, 1.0);
        assert_eq!(f.entropy_norm, 0.0);
        assert_eq!(f.top_ratio, 1e6);
        assert_eq!(f.dominant, NormativeSchool::Consequentialism);
        let v = prior_feature_vector(&f);
        assert_eq!(v, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1e6f64.ln(), 1.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_features() {
        let f = derive_prior_features(&PriorSimplex::uniform());
        assert_eq!(f.margin, 0.0);
        assert!((f.entropy_norm - 1.0).abs() < 1e-12);
        assert_eq!(f.top_ratio, 1.0);
        assert_eq!(f.dominant, NormativeSchool::Consequentialism);
        let v = prior_feature_vector(&f);
        let expected = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_prior_matches_high_precision_values() {
        // 50-digit oracle: H = 1.02965301406457352741..., H / ln 3 = 0.93723056321612953327...
        let f = derive_prior_features(&simplex(0.5, 0.3, 0.2));
        assert!((f.margin - 0.2).abs() < 1e-15);
        assert!((f.top_ratio - 1.6667).abs() < 1e-4);
        assert!((f.entropy_norm - 0.9372).abs() < 1e-4);
        assert!((f.entropy_norm - 0.937_230_563_216_129_5).abs() < 1e-9);
        assert_eq!(f.dominant, NormativeSchool::Consequentialism);
        let v = prior_feature_vector(&f);
        // ln(5/3) = 0.510825623765990683...
        assert!((v[5] - 0.510_825_623_765_990_7).abs() < 1e-6);
    }

    #[test]
    fn second_place_tie_break() {
        let f = derive_prior_features(&simplex(0.2, 0.4, 0.4));
        assert_eq!(f.dominant, NormativeSchool::VirtueEthics);
        assert_eq!(f.margin, 0.0);
        assert_eq!(f.top_ratio, 1.0);
    }

    fn arb_simplex() -> impl Strategy<Value = PriorSimplex> {
        (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0)
            .prop_filter("nonzero", |(a, b, c)| a + b + c > 1e-6)
            .prop_map(|(a, b, c)| {
                let s = a + b + c;
                PriorSimplex::from_scores(a / s, b / s, c / s).unwrap()
            })
    }

    proptest! {
        #[test]
        fn permutation_equivariance(p in arb_simplex(), perm in 0usize..6) {
            const PERMS: [[usize; 3]; 6] =
                [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let c = p.components();
            let map = PERMS[perm];
            // Component i of the permuted point is component map[i] of the original.
            let q = PriorSimplex::from_scores(c[map[0]], c[map[1]], c[map[2]]).unwrap();
            let f = derive_prior_features(&p);
            let g = derive_prior_features(&q);
            prop_assert!((f.margin - g.margin).abs() < 1e-12);
            prop_assert!((f.entropy_norm - g.entropy_norm).abs() < 1e-12);
            prop_assert!((f.top_ratio - g.top_ratio).abs() <= 1e-9 * f.top_ratio);
            let mut sorted = c;
            sorted.sort_by(|a, b| b.total_cmp(a));
            if sorted[0] > sorted[1] {
                prop_assert_eq!(map[g.dominant.index()], f.dominant.index());
            }
        }

        #[test]
        fn ranges_hold(p in arb_simplex()) {
            let f = derive_prior_features(&p);
            prop_assert!((0.0..=1.0).contains(&f.entropy_norm));
            prop_assert!((0.0..=1.0).contains(&f.margin));
            prop_assert!(f.top_ratio >= 1.0);
            prop_assert_eq!(prior_feature_vector(&f).len(), PRIOR_FEATURE_WIDTH);
        }
    }
}
