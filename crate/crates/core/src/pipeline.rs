//! End-to-end train/evaluate runs and the two ablation tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytics::{evaluate_predictions, EvalReport};
use crate::case::Case;
use crate::error::{Error, Result};
use crate::fusion::{Block, Featurizer, FusionConfig};
use crate::learners::ClassProbabilities;
use crate::semantic::{fit_context_encoder, EmbeddingTable};
use crate::stack::{stack_fit, stack_predict, train_test_split, FitLog, StackConfig, StackPrediction, TrainedStack};
use crate::synth::labels;
use crate::taxonomy::Subtheory;

pub struct TrainOutcome {
    pub model: TrainedStack,
    pub log: FitLog,
    pub meta_features: Vec<Vec<f64>>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub test_labels: Vec<Subtheory>,
    pub predictions: Vec<StackPrediction>,
    pub report: EvalReport,
    /// Test accuracy of the refit forest, boosting and linear learners.
    pub base_accuracies: [f64; 3],
}

/// Splits, fits the context vocabulary and the stack on the training part,
/// and evaluates on the held-out part.
pub fn train_and_evaluate(
    cases: &[Case],
    table: Option<&EmbeddingTable>,
    fusion: FusionConfig,
    config: &StackConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let all_labels = labels(cases)?;
    let y: Vec<usize> = all_labels.iter().map(|s| s.index()).collect();
    let (train_idx, test_idx) = train_test_split(&y, &config.split)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| cases[i].clone()).collect::<Vec<_>>();
    let (train, test) = (pick(&train_idx), pick(&test_idx));

    let dims = table.map(EmbeddingTable::dims).unwrap_or_default();
    if fusion.uses(Block::Supervector) && table.is_none() {
        return Err(Error::MissingBlock("SV"));
    }
    let featurizer = Featurizer::new(fusion, fit_context_encoder(&train), dims)?;
    let x_train = featurizer.featurize_all(&train, table)?;
    let x_test = featurizer.featurize_all(&test, table)?;
    let train_labels: Vec<Subtheory> = train_idx.iter().map(|&i| all_labels[i]).collect();
    let test_labels: Vec<Subtheory> = test_idx.iter().map(|&i| all_labels[i]).collect();

    let fit = stack_fit(featurizer, &x_train, &train_labels, config)?;
    let predictions = x_test
        .iter()
        .map(|x| stack_predict(&fit.model, x))
        .collect::<Result<Vec<_>>>()?;
    let mut report = evaluate_predictions(&predictions, &test_labels)?;
    report.config = fusion.to_string();

    let base_accuracies = std::array::from_fn(|b| {
        let hits = predictions
            .iter()
            .zip(&test_labels)
            .filter(|(p, y)| p.base[b].argmax() == y.index())
            .count();
        hits as f64 / test_labels.len() as f64
    });

    Ok(TrainOutcome {
        model: fit.model,
        log: fit.log,
        meta_features: fit.meta_features,
        train_ids: train.iter().map(|c| c.case_id.clone()).collect(),
        test_ids: test.iter().map(|c| c.case_id.clone()).collect(),
        test_labels,
        predictions,
        report,
        base_accuracies,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationMode {
    Features,
    Transformers,
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "features" => Ok(AblationMode::Features),
            "transformers" => Ok(AblationMode::Transformers),
            other => Err(Error::Config(format!(
                "unknown ablation mode `{other}` (expected features or transformers)"
            ))),
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationMode::Features => "features",
            AblationMode::Transformers => "transformers",
        })
    }
}

impl AblationMode {
    /// Named fusion configurations, in table order.
    pub fn arms(self) -> Vec<(&'static str, FusionConfig)> {
        use Block::*;
        let cfg = |blocks: &[Block], e: [bool; 3]| FusionConfig::new(blocks, e).expect("preset is valid");
        match self {
            AblationMode::Features => vec![
                ("Full", FusionConfig::full()),
                ("SV+C", cfg(&[Supervector, Context], [true; 3])),
                ("N+P+SV", cfg(&[NormativePrior, Supervector], [true; 3])),
                ("SV", cfg(&[Supervector], [true; 3])),
            ],
            AblationMode::Transformers => vec![
                ("All", FusionConfig::full()),
                ("\u{2212}E1", cfg(&Block::ORDER, [false, true, true])),
                ("\u{2212}E2", cfg(&Block::ORDER, [true, false, true])),
                ("\u{2212}E3", cfg(&Block::ORDER, [true, true, false])),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub fusion: FusionConfig,
    pub width: usize,
    pub report: EvalReport,
    pub test_ids: Vec<String>,
}

/// One stack per arm, all sharing the split and seeds in `config`.
pub fn run_ablations(
    cases: &[Case],
    table: Option<&EmbeddingTable>,
    mode: AblationMode,
    config: &StackConfig,
) -> Result<Vec<AblationRow>> {
    mode.arms()
        .into_iter()
        .map(|(name, fusion)| {
            let out = train_and_evaluate(cases, table, fusion, config)?;
            Ok(AblationRow {
                name: name.to_string(),
                fusion,
                width: out.model.featurizer.width(),
                report: out.report,
                test_ids: out.test_ids,
            })
        })
        .collect()
}

/// Aligned plain-text rendering of an ablation table.
pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let mut out = format!("{:<8} {:>6} {:>9} {:>9} {:>9} {:>9}\n", "config", "width", "accuracy", "macro_f1", "H_raw", "H_cal");
    for r in rows {
        out.push_str(&format!(
            "{:<8} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            r.name,
            r.width,
            r.report.exact_match_accuracy,
            r.report.macro_f1,
            r.report.mean_entropy_raw,
            r.report.mean_entropy_calibrated
        ));
    }
    out
}

/// Calibrated distributions of a prediction list.
pub fn calibrated(preds: &[StackPrediction]) -> Vec<ClassProbabilities> {
    preds.iter().map(|p| p.calibrated.clone()).collect()
}
