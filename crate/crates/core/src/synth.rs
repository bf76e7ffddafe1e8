//! Seeded synthetic benchmark with controllable subtheory overlap.
//!
//! Construction, for overlap `o`:
//!
//! * Prior center of a subtheory: `(1 - o) * vertex(school) + o * (1/3, 1/3, 1/3)`,
//!   then `0.04 * (1 - o)` of mass moved from the own school to the other two,
//!   split `(w, 1 - w)` with `w = position_in_school / 4`.
//! * Each prior: `(1 - eta) * center + eta * Dirichlet(1, 1, 1)` with
//!   `eta = 0.05 + 0.45 * o`.
//! * Embedding segment `e` of a case: `s_school * u[e][school] + s_sub * u[e][sub] + N(0, I)`
//!   where the `u` are random unit directions, `s_school = 3 * (1 - 0.6 o)` and
//!   `s_sub = 3 * (1 - o)`.
//! * Single-valued categoricals take the school's preferred value with
//!   probability `0.6 * (1 - o)`, otherwise a uniform value. The upheld
//!   principles hold the subtheory's signature principle with probability
//!   `0.9 - 0.6 o` plus one uniform draw.
//!
//! Stream 0 of the seed draws the directions, stream 1 the cases.

use serde::{Deserialize, Serialize};

use crate::case::{Case, ContextualFeatures, PriorSimplex};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::semantic::{EmbeddingDims, EmbeddingTable};
use crate::taxonomy::{Subtheory, NUM_SCHOOLS, NUM_SUBTHEORIES};

const PRIOR_TILT: f64 = 0.04;
const SCHOOL_SCALE: f64 = 3.0;
const SUB_SCALE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabSizes {
    pub severity: usize,
    pub duration: usize,
    pub utility: usize,
    pub moral_intention: usize,
    pub principles: usize,
}

impl Default for VocabSizes {
    fn default() -> Self {
        VocabSizes {
            severity: 3,
            duration: 3,
            utility: 3,
            moral_intention: 4,
            principles: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub cases_per_subtheory: usize,
    pub overlap: f64,
    pub embedding_dims: EmbeddingDims,
    pub vocab_sizes: VocabSizes,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            cases_per_subtheory: 30,
            overlap: 0.3,
            embedding_dims: EmbeddingDims([24, 48, 48]),
            vocab_sizes: VocabSizes::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::Config(format!("overlap must lie in [0, 1], got {}", self.overlap)));
        }
        if self.cases_per_subtheory == 0 {
            return Err(Error::Config("cases_per_subtheory must be positive".into()));
        }
        let v = &self.vocab_sizes;
        if [v.severity, v.duration, v.utility, v.moral_intention, v.principles].contains(&0) {
            return Err(Error::Config("vocabulary sizes must be positive".into()));
        }
        self.embedding_dims.validate()
    }
}

/// Latent prior center of a subtheory at the given overlap.
pub fn prior_center(sub: Subtheory, overlap: f64) -> [f64; 3] {
    let own = sub.school().index();
    let mut c = [overlap / 3.0; 3];
    c[own] += 1.0 - overlap;
    let tilt = PRIOR_TILT * (1.0 - overlap);
    let w = (sub.index() % 5) as f64 / 4.0;
    let (a, b) = ((own + 1) % NUM_SCHOOLS, (own + 2) % NUM_SCHOOLS);
    c[own] -= tilt;
    c[a] += tilt * w;
    c[b] += tilt * (1.0 - w);
    c
}

fn vocabulary(base: &[&str], size: usize, prefix: &str) -> Vec<String> {
    (0..size)
        .map(|i| base.get(i).map_or_else(|| format!("{prefix}_{i}"), |s| s.to_string()))
        .collect()
}

const SEVERITY: [&str; 5] = ["low", "moderate", "high", "critical", "catastrophic"];
const DURATION: [&str; 4] = ["momentary", "short-term", "long-term", "permanent"];
const UTILITY: [&str; 3] = ["good", "bad", "morally gray"];
const INTENTION: [&str; 5] = ["benevolent", "self-interested", "dutiful", "negligent", "malicious"];
const PRINCIPLES: [&str; 15] = [
    "welfare", "fairness", "honesty", "autonomy", "loyalty", "care", "justice", "courage", "temperance", "piety",
    "consent", "rights", "promise-keeping", "non-maleficence", "self-interest",
];

const AGENTS: [&str; 8] = ["a nurse", "a manager", "a student", "a parent", "a doctor", "a neighbour", "an engineer", "a friend"];
const PATIENTS: [&str; 6] = ["a colleague", "a stranger", "a child", "a client", "a sibling", "the public"];
const ACTIONS: [&str; 8] = [
    "report a mistake",
    "keep a secret",
    "break a promise",
    "share private data",
    "donate savings",
    "refuse an order",
    "tell a white lie",
    "reallocate scarce resources",
];
const DOMAINS: [&str; 5] = ["healthcare", "workplace", "family", "education", "community"];
const RELATIONS: [&str; 4] = ["professional", "familial", "friendship", "none"];
const DECISIONS: [&str; 3] = ["permissible", "impermissible", "ambiguous"];

struct Vocab {
    severity: Vec<String>,
    duration: Vec<String>,
    utility: Vec<String>,
    intention: Vec<String>,
    principles: Vec<String>,
}

fn unit_vector(rng: &mut SplitMix64, d: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn pick<'a>(rng: &mut SplitMix64, items: &'a [&str]) -> &'a str {
    items[rng.below(items.len())]
}

/// Value with a preferred index chosen with probability `p`, otherwise uniform.
fn biased(rng: &mut SplitMix64, vocab: &[String], preferred: usize, p: f64) -> String {
    if rng.next_f64() < p {
        vocab[preferred % vocab.len()].clone()
    } else {
        vocab[rng.below(vocab.len())].clone()
    }
}

pub fn generate(config: &SynthConfig) -> Result<(Vec<Case>, EmbeddingTable)> {
    config.validate()?;
    let o = config.overlap;
    let dims = config.embedding_dims;

    let mut dir_rng = SplitMix64::stream(config.seed, 0);
    let school_dirs: Vec<Vec<Vec<f64>>> = dims
        .0
        .iter()
        .map(|&d| (0..NUM_SCHOOLS).map(|_| unit_vector(&mut dir_rng, d)).collect())
        .collect();
    let sub_dirs: Vec<Vec<Vec<f64>>> = dims
        .0
        .iter()
        .map(|&d| (0..NUM_SUBTHEORIES).map(|_| unit_vector(&mut dir_rng, d)).collect())
        .collect();
    let s_school = SCHOOL_SCALE * (1.0 - 0.6 * o);
    let s_sub = SUB_SCALE * (1.0 - o);

    let v = &config.vocab_sizes;
    let vocab = Vocab {
        severity: vocabulary(&SEVERITY, v.severity, "severity"),
        duration: vocabulary(&DURATION, v.duration, "duration"),
        utility: vocabulary(&UTILITY, v.utility, "utility"),
        intention: vocabulary(&INTENTION, v.moral_intention, "intention"),
        principles: vocabulary(&PRINCIPLES, v.principles, "principle"),
    };
    let p_cat = 0.6 * (1.0 - o);
    let p_signature = 0.9 - 0.6 * o;
    let eta = 0.05 + 0.45 * o;

    let mut rng = SplitMix64::stream(config.seed, 1);
    let mut cases = Vec::with_capacity(NUM_SUBTHEORIES * config.cases_per_subtheory);
    let mut table = EmbeddingTable::new(dims)?;

    for sub in Subtheory::ALL {
        let school = sub.school();
        let s = school.index();
        let center = prior_center(sub, o);
        for i in 0..config.cases_per_subtheory {
            let case_id = format!("syn-{:02}-{:03}", sub.index(), i);

            let noise = rng.dirichlet(&[1.0; 3]);
            let mix: Vec<f64> = (0..3).map(|k| (1.0 - eta) * center[k] + eta * noise[k]).collect();
            let prior = PriorSimplex::from_scores(mix[0], mix[1], mix[2])?;

            let vectors: [Vec<f32>; 3] = std::array::from_fn(|e| {
                (0..dims.0[e])
                    .map(|j| {
                        let mean = s_school * school_dirs[e][s][j] + s_sub * sub_dirs[e][sub.index()][j];
                        (mean + rng.normal()) as f32
                    })
                    .collect()
            });
            table.insert(case_id.clone(), vectors)?;

            let mut upheld = Vec::new();
            if rng.next_f64() < p_signature {
                upheld.push(vocab.principles[sub.index() % vocab.principles.len()].clone());
            }
            upheld.push(vocab.principles[rng.below(vocab.principles.len())].clone());
            upheld.sort();
            upheld.dedup();
            let violated = vec![biased(&mut rng, &vocab.principles, 3 * s + 1, p_cat)];

            let agent = pick(&mut rng, &AGENTS);
            let patient = pick(&mut rng, &PATIENTS);
            let action = pick(&mut rng, &ACTIONS);
            let domain = pick(&mut rng, &DOMAINS);
            let context = ContextualFeatures {
                active_agent: agent.to_string(),
                passive_agent: patient.to_string(),
                agent_relationship: pick(&mut rng, &RELATIONS).to_string(),
                action: action.to_string(),
                domain: domain.to_string(),
                ethical_issues: vec![school.name().to_lowercase(), sub.name().to_lowercase()],
                consequence: format!("{patient} is affected"),
                severity: biased(&mut rng, &vocab.severity, s, p_cat),
                utility: biased(&mut rng, &vocab.utility, s, p_cat),
                duration: biased(&mut rng, &vocab.duration, s, p_cat),
                moral_intention: biased(&mut rng, &vocab.intention, s, p_cat),
                principles_upheld: upheld,
                principles_violated: violated,
            };
            let selftext = format!(
                "In a {domain} setting, {agent} considers whether to {action} affecting {patient}. \
                 The reasoning offered appeals to {}.",
                sub.gloss().to_lowercase()
            );
            let summary = format!("{agent} weighs whether to {action}; {}", sub.name().to_lowercase());
            cases.push(Case {
                case_id,
                selftext,
                summary,
                context,
                prior: Some(prior),
                moral_decision: pick(&mut rng, &DECISIONS).to_string(),
                school_label: Some(school),
                subtheory_label: Some(sub),
            });
        }
    }
    Ok((cases, table))
}

/// Labels of `cases`, failing on any unlabeled case.
pub fn labels(cases: &[Case]) -> Result<Vec<Subtheory>> {
    cases
        .iter()
        .map(|c| {
            c.subtheory_label
                .ok_or_else(|| Error::Config(format!("case `{}` has no subtheory label", c.case_id)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::validate_dataset;

    fn small(overlap: f64) -> SynthConfig {
        SynthConfig {
            seed: 7,
            cases_per_subtheory: 6,
            overlap,
            embedding_dims: EmbeddingDims([4, 6, 6]),
            vocab_sizes: VocabSizes::default(),
        }
    }

    #[test]
    fn balanced_and_valid() {
        let (cases, table) = generate(&small(0.3)).unwrap();
        assert_eq!(cases.len(), 90);
        let report = validate_dataset(&cases);
        assert!(report.balanced);
        assert!(Subtheory::ALL.iter().all(|&s| report.count(s) == 6));
        assert_eq!(table.len(), 90);
        for c in &cases {
            let p = c.prior.unwrap().components();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn zero_overlap_concentrates_priors() {
        let (cases, _) = generate(&small(0.0)).unwrap();
        for c in &cases {
            let school = c.school_label.unwrap();
            assert!(c.prior.unwrap().component(school) >= 0.9, "{}", c.case_id);
        }
    }

    #[test]
    fn full_overlap_centers_are_uniform() {
        for sub in Subtheory::ALL {
            for x in prior_center(sub, 1.0) {
                assert!((x - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, ta) = generate(&small(0.5)).unwrap();
        let (b, tb) = generate(&small(0.5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (pa, pb) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        ta.save_jsonl(&pa).unwrap();
        tb.save_jsonl(&pb).unwrap();
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
        let (c, _) = generate(&SynthConfig { seed: 8, ..small(0.5) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&small(1.5)).is_err());
        assert!(generate(&SynthConfig { cases_per_subtheory: 0, ..small(0.1) }).is_err());
    }
}
