//! Case records, the prior simplex, and dataset validation.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{NormativeSchool, Subtheory, NUM_SUBTHEORIES};

/// Tolerance on the component sum of a PriorSimplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;
/// Maximum drift from unit sum that raw scores may have and still be repaired.
pub const RENORMALIZE_TOLERANCE: f64 = 0.02;

/// A point (alpha, beta, gamma) on the normative simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriorSimplex {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl PriorSimplex {
    /// Strict constructor: components in [0, 1] summing to 1 within 1e-9.
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let parts = [alpha, beta, gamma];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::InvalidPrior(format!(
                "components must lie in [0, 1], got ({alpha}, {beta}, {gamma})"
            )));
        }
        let sum = alpha + beta + gamma;
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::PriorOutOfTolerance { sum });
        }
        Ok(PriorSimplex { alpha, beta, gamma })
    }

    /// Accepts raw alignment scores whose sum is within 0.02 of 1 and rescales
    /// them onto the simplex. Scores already summing to 1 (within 1e-12) are
    /// kept bit-for-bit.
    pub fn from_scores(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let parts = [alpha, beta, gamma];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidPrior(format!(
                "scores must be finite and non-negative, got ({alpha}, {beta}, {gamma})"
            )));
        }
        let sum = alpha + beta + gamma;
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(Error::PriorOutOfTolerance { sum });
        }
        // Rounding can push a dominant component a few ulps past 1.
        let fit = |v: f64| v.min(1.0);
        if (sum - 1.0).abs() <= 1e-12 {
            return PriorSimplex::new(fit(alpha), fit(beta), fit(gamma));
        }
        PriorSimplex::new(fit(alpha / sum), fit(beta / sum), fit(gamma / sum))
    }

    pub fn uniform() -> Self {
        PriorSimplex {
            alpha: 1.0 / 3.0,
            beta: 1.0 / 3.0,
            gamma: 1.0 / 3.0,
        }
    }

    pub fn vertex(school: NormativeSchool) -> Self {
        let mut parts = [0.0; 3];
        parts[school.index()] = 1.0;
        PriorSimplex {
            alpha: parts[0],
            beta: parts[1],
            gamma: parts[2],
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Components in canonical (alpha, beta, gamma) order.
    pub fn components(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn component(&self, school: NormativeSchool) -> f64 {
        self.components()[school.index()]
    }
}

impl<'de> Deserialize<'de> for PriorSimplex {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            alpha: f64,
            beta: f64,
            gamma: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        PriorSimplex::from_scores(raw.alpha, raw.beta, raw.gamma).map_err(serde::de::Error::custom)
    }
}

/// Structured context attached to a case. Empty strings mean "not recorded".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextualFeatures {
    pub active_agent: String,
    pub passive_agent: String,
    pub agent_relationship: String,
    pub action: String,
    pub domain: String,
    pub ethical_issues: Vec<String>,
    pub consequence: String,
    pub severity: String,
    pub utility: String,
    pub duration: String,
    pub moral_intention: String,
    pub principles_upheld: Vec<String>,
    pub principles_violated: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub case_id: String,
    pub selftext: String,
    pub summary: String,
    pub context: ContextualFeatures,
    pub prior: Option<PriorSimplex>,
    pub moral_decision: String,
    pub school_label: Option<NormativeSchool>,
    pub subtheory_label: Option<Subtheory>,
}

impl Case {
    /// Checks the label hierarchy: a subtheory's parent must match the school label.
    pub fn check_labels(&self) -> std::result::Result<(), String> {
        match (self.school_label, self.subtheory_label) {
            (Some(school), Some(sub)) if sub.school() != school => Err(format!(
                "subtheory `{}` belongs to {}, but the school label is {}",
                sub.name(),
                sub.school().name(),
                school.name()
            )),
            _ => Ok(()),
        }
    }
}

/// Rejects datasets with repeated case ids or inconsistent labels.
pub fn check_unique_ids(cases: &[Case]) -> Result<()> {
    let mut seen = HashSet::with_capacity(cases.len());
    for case in cases {
        if !seen.insert(case.case_id.as_str()) {
            return Err(Error::DuplicateCase(case.case_id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub n_cases: usize,
    pub subtheory_counts: BTreeMap<String, usize>,
    pub school_counts: BTreeMap<String, usize>,
    pub unlabeled: usize,
    pub missing_fields: BTreeMap<String, usize>,
    pub balanced: bool,
}

impl DatasetReport {
    pub fn count(&self, sub: Subtheory) -> usize {
        self.subtheory_counts.get(sub.name()).copied().unwrap_or(0)
    }
}

pub fn validate_dataset(cases: &[Case]) -> DatasetReport {
    let mut counts = [0usize; NUM_SUBTHEORIES];
    let mut school_counts = [0usize; 3];
    let mut unlabeled = 0;
    let mut missing: BTreeMap<String, usize> = BTreeMap::new();
    let mut miss = |field: &str, absent: bool| {
        let slot = missing.entry(field.to_string()).or_insert(0);
        if absent {
            *slot += 1;
        }
    };

    for case in cases {
        match case.subtheory_label {
            Some(sub) => {
                counts[sub.index()] += 1;
                school_counts[sub.school().index()] += 1;
            }
            None => {
                unlabeled += 1;
                if let Some(school) = case.school_label {
                    school_counts[school.index()] += 1;
                }
            }
        }
        let ctx = &case.context;
        miss("selftext", case.selftext.trim().is_empty());
        miss("summary", case.summary.trim().is_empty());
        miss("active_agent", ctx.active_agent.is_empty());
        miss("passive_agent", ctx.passive_agent.is_empty());
        miss("agent_relationship", ctx.agent_relationship.is_empty());
        miss("action", ctx.action.is_empty());
        miss("domain", ctx.domain.is_empty());
        miss("ethical_issues", ctx.ethical_issues.is_empty());
        miss("consequence", ctx.consequence.is_empty());
        miss("severity", ctx.severity.is_empty());
        miss("utility", ctx.utility.is_empty());
        miss("duration", ctx.duration.is_empty());
        miss("moral_intention", ctx.moral_intention.is_empty());
        miss("principles_upheld", ctx.principles_upheld.is_empty());
        miss("principles_violated", ctx.principles_violated.is_empty());
        miss("moral_decision", case.moral_decision.is_empty());
        miss("prior", case.prior.is_none());
        miss("normative_school", case.school_label.is_none());
        miss("ethics_subtheory", case.subtheory_label.is_none());
    }

    let balanced = counts.iter().all(|&c| c == counts[0]);
    DatasetReport {
        n_cases: cases.len(),
        subtheory_counts: Subtheory::ALL
            .iter()
            .map(|s| (s.name().to_string(), counts[s.index()]))
            .collect(),
        school_counts: NormativeSchool::ALL
            .iter()
            .map(|s| (s.name().to_string(), school_counts[s.index()]))
            .collect(),
        unlabeled,
        missing_fields: missing,
        balanced,
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn case(id: &str, sub: Subtheory) -> Case {
        Case {
            case_id: id.to_string(),
            selftext: format!("text for {id}"),
            summary: format!("summary for {id}"),
            context: ContextualFeatures::default(),
            prior: Some(PriorSimplex::vertex(sub.school())),
            moral_decision: "permissible".into(),
            school_label: Some(sub.school()),
            subtheory_label: Some(sub),
        }
    }
}
