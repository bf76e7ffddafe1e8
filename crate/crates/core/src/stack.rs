//! Stacked generalization: out-of-fold base probabilities feed a boosted
//! meta-learner whose output is sharpened by power-scaling calibration.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::case::Case;
use crate::error::{Error, Result};
use crate::fusion::{standardize_apply, standardize_fit, Featurizer, Scaler};
use crate::learners::{
    boost_fit, boost_predict, forest_fit, forest_predict, linear_fit, linear_predict, BoostModel, BoostParams,
    ClassProbabilities, ForestModel, LearnerParams, LinearModel,
};
use crate::rng::{derive, SplitMix64};
use crate::semantic::EmbeddingTable;
use crate::taxonomy::{Subtheory, NUM_SUBTHEORIES};

pub const ARTIFACT_FORMAT: &str = "ethics-stack";
pub const ARTIFACT_VERSION: u64 = 1;
pub const N_BASE: usize = 3;
pub const META_WIDTH: usize = N_BASE * NUM_SUBTHEORIES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.8,
            stratified: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StackConfig {
    pub folds: usize,
    pub learners: LearnerParams,
    pub meta: BoostParams,
    pub calibration_temperature: f64,
    pub split: SplitConfig,
}

pub fn default_meta_params() -> BoostParams {
    BoostParams {
        n_rounds: 100,
        max_depth: 3,
        learning_rate: 0.1,
        ..BoostParams::default()
    }
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            folds: 5,
            learners: LearnerParams::default(),
            meta: default_meta_params(),
            calibration_temperature: 0.6,
            split: SplitConfig::default(),
        }
    }
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if !(self.calibration_temperature > 0.0 && self.calibration_temperature.is_finite()) {
            return Err(Error::Config("calibration_temperature must be positive".into()));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        self.learners.validate()?;
        self.meta.validate()
    }

    /// Fans one global seed out to the split, the three base learners and the
    /// meta-learner (streams 10, 11, 12).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.split.seed = derive(seed, 10);
        self.learners = self.learners.reseeded(derive(seed, 11));
        self.meta.seed = derive(seed, 12);
        self
    }
}

/// Train/test partition of row indices, each sorted ascending.
pub fn train_test_split(labels: &[usize], cfg: &SplitConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = labels.len();
    let mut rng = SplitMix64::stream(cfg.seed, 0);
    let mut test = Vec::new();
    if cfg.stratified {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        for class in 0..n_classes {
            let mut rows: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
            rng.shuffle(&mut rows);
            let k = ((1.0 - cfg.train_fraction) * rows.len() as f64).round() as usize;
            test.extend_from_slice(&rows[..k]);
        }
    } else {
        let k = ((1.0 - cfg.train_fraction) * n as f64).round() as usize;
        test = rng.sample_indices(n, k);
    }
    test.sort_unstable();
    let mut is_test = vec![false; n];
    test.iter().for_each(|&i| is_test[i] = true);
    let train: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config(format!(
            "split of {n} rows at train_fraction {} leaves an empty partition",
            cfg.train_fraction
        )));
    }
    Ok((train, test))
}

/// Fold index per row: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut assignment = vec![0; labels.len()];
    let mut rng = SplitMix64::stream(seed, 1);
    for class in 0..n_classes {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if rows.is_empty() {
            continue;
        }
        if rows.len() < folds {
            return Err(Error::InsufficientSupport {
                class,
                count: rows.len(),
                folds,
            });
        }
        rng.shuffle(&mut rows);
        for (k, &r) in rows.iter().enumerate() {
            assignment[r] = k % folds;
        }
    }
    Ok(assignment)
}

/// Which rows trained and which rows were predicted by each fold's base models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub train_rows: Vec<usize>,
    pub heldout_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitLog {
    pub folds: Vec<FoldRecord>,
    /// For each training row, the fold whose base models produced its meta-features.
    pub meta_source: Vec<usize>,
}

impl FitLog {
    /// True when no row's meta-features came from a model that trained on it,
    /// and every row was predicted exactly once.
    pub fn is_leak_free(&self) -> bool {
        let mut predicted = vec![0usize; self.meta_source.len()];
        for rec in &self.folds {
            for &r in &rec.heldout_rows {
                predicted[r] += 1;
            }
        }
        predicted.iter().all(|&c| c == 1)
            && self.meta_source.iter().enumerate().all(|(r, &f)| {
                let rec = &self.folds[f];
                rec.heldout_rows.contains(&r) && !rec.train_rows.contains(&r)
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedStack {
    pub featurizer: Featurizer,
    pub scaler: Scaler,
    pub forest: ForestModel,
    pub boost: BoostModel,
    pub linear: LinearModel,
    pub meta: BoostModel,
    pub temperature: f64,
    /// Class index to subtheory name.
    pub classes: Vec<String>,
}

pub struct StackFit {
    pub model: TrainedStack,
    pub log: FitLog,
    /// Out-of-fold meta-features, one row of width 45 per training row.
    pub meta_features: Vec<Vec<f64>>,
}

struct Bases {
    scaler: Scaler,
    forest: ForestModel,
    boost: BoostModel,
    linear: LinearModel,
}

impl Bases {
    fn fit(x: &[Vec<f64>], y: &[usize], params: &LearnerParams) -> Result<Self> {
        let scaler = standardize_fit(x)?;
        let xs = standardize_apply(&scaler, x)?;
        Ok(Bases {
            forest: forest_fit(&xs, y, NUM_SUBTHEORIES, &params.forest)?,
            boost: boost_fit(&xs, y, NUM_SUBTHEORIES, &params.boost)?,
            linear: linear_fit(&xs, y, NUM_SUBTHEORIES, &params.linear)?,
            scaler,
        })
    }

    fn predict(&self, x: &[f64]) -> Result<[ClassProbabilities; N_BASE]> {
        let xs = self.scaler.apply(x)?;
        Ok([
            forest_predict(&self.forest, &xs)?,
            boost_predict(&self.boost, &xs)?,
            linear_predict(&self.linear, &xs)?,
        ])
    }
}

fn meta_row(base: &[ClassProbabilities; N_BASE]) -> Vec<f64> {
    base.iter().flat_map(|p| p.as_slice().iter().copied()).collect()
}

fn select<T: Clone>(items: &[T], rows: &[usize]) -> Vec<T> {
    rows.iter().map(|&r| items[r].clone()).collect()
}

/// Fits the stack on fused (unscaled) training rows. Each fold, and the final
/// refit, standardizes with a scaler fit on its own training rows only.
pub fn stack_fit(featurizer: Featurizer, x: &[Vec<f64>], labels: &[Subtheory], config: &StackConfig) -> Result<StackFit> {
    config.validate()?;
    if x.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: labels.len(),
        });
    }
    if let Some(row) = x.iter().find(|r| r.len() != featurizer.width()) {
        return Err(Error::WidthMismatch {
            expected: featurizer.width(),
            got: row.len(),
        });
    }
    let y: Vec<usize> = labels.iter().map(|s| s.index()).collect();
    let assignment = stratified_folds(&y, config.folds, derive(config.split.seed, 1))?;

    let mut meta_features = vec![Vec::new(); x.len()];
    let mut meta_source = vec![0; x.len()];
    let mut records = Vec::with_capacity(config.folds);
    for fold in 0..config.folds {
        let (heldout, train): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|&r| assignment[r] == fold);
        let bases = Bases::fit(&select(x, &train), &select(&y, &train), &config.learners)?;
        for &r in &heldout {
            meta_features[r] = meta_row(&bases.predict(&x[r])?);
            meta_source[r] = fold;
        }
        records.push(FoldRecord {
            fold,
            train_rows: train,
            heldout_rows: heldout,
        });
    }

    let meta = boost_fit(&meta_features, &y, NUM_SUBTHEORIES, &config.meta)?;
    let full = Bases::fit(x, &y, &config.learners)?;
    let model = TrainedStack {
        featurizer,
        scaler: full.scaler,
        forest: full.forest,
        boost: full.boost,
        linear: full.linear,
        meta,
        temperature: config.calibration_temperature,
        classes: Subtheory::ALL.iter().map(|s| s.name().to_string()).collect(),
    };
    Ok(StackFit {
        model,
        log: FitLog {
            folds: records,
            meta_source,
        },
        meta_features,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackPrediction {
    /// Forest, boosting and linear probabilities.
    pub base: [ClassProbabilities; N_BASE],
    /// Meta-learner output before calibration.
    pub raw: ClassProbabilities,
    pub calibrated: ClassProbabilities,
    pub predicted: Subtheory,
}

/// Predicts from a fused feature row of the model's layout width.
pub fn stack_predict(model: &TrainedStack, x: &[f64]) -> Result<StackPrediction> {
    if x.len() != model.featurizer.width() {
        return Err(Error::WidthMismatch {
            expected: model.featurizer.width(),
            got: x.len(),
        });
    }
    let xs = model.scaler.apply(x)?;
    let base = [
        forest_predict(&model.forest, &xs)?,
        boost_predict(&model.boost, &xs)?,
        linear_predict(&model.linear, &xs)?,
    ];
    let raw = boost_predict(&model.meta, &meta_row(&base))?;
    let calibrated = calibrate(raw.as_slice(), model.temperature)?;
    let predicted = Subtheory::from_index(calibrated.argmax()).expect("15-way output");
    Ok(StackPrediction {
        base,
        raw,
        calibrated,
        predicted,
    })
}

pub fn predict_case(model: &TrainedStack, case: &Case, table: Option<&EmbeddingTable>) -> Result<StackPrediction> {
    let fused = model.featurizer.featurize(case, table)?;
    stack_predict(model, &fused.values)
}

/// Power scaling `p_i^(1/T) / sum_j p_j^(1/T)`, evaluated in log space
/// relative to the largest entry. Zero entries stay zero.
pub fn calibrate(dist: &[f64], temperature: f64) -> Result<ClassProbabilities> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    let dist = ClassProbabilities::new(dist.to_vec())?;
    let p = dist.as_slice();
    let ln_max = p.iter().copied().fold(0.0, f64::max).ln();
    let powered: Vec<f64> = p
        .iter()
        .map(|&v| if v > 0.0 { ((v.ln() - ln_max) / temperature).exp() } else { 0.0 })
        .collect();
    let total: f64 = powered.iter().sum();
    ClassProbabilities::new(powered.into_iter().map(|v| v / total).collect())
}

fn checksum(payload: &Value) -> Result<String> {
    // serde_json maps are key-sorted, so this string is canonical.
    let canonical = serde_json::to_string(payload)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// Artifact body without the timestamp: format, version, checksum and payload.
pub fn artifact_payload(model: &TrainedStack) -> Result<Value> {
    Ok(serde_json::to_value(model)?)
}

pub fn save_stack(model: &TrainedStack, path: &Path) -> Result<()> {
    let payload = artifact_payload(model)?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let envelope = serde_json::json!({
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "created": created,
        "checksum": checksum(&payload)?,
        "payload": payload,
    });
    std::fs::write(path, serde_json::to_string(&envelope)?).map_err(|e| Error::io(path, e))
}

pub fn load_stack(path: &Path) -> Result<TrainedStack> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let envelope: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Checksum(format!("{}: artifact is truncated or not JSON ({e})", path.display())))?;
    if envelope.get("format").and_then(Value::as_str) != Some(ARTIFACT_FORMAT) {
        return Err(Error::Config(format!("{} is not an {ARTIFACT_FORMAT} artifact", path.display())));
    }
    let version = envelope.get("version").and_then(Value::as_u64).unwrap_or(0);
    if version != ARTIFACT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: ARTIFACT_VERSION,
        });
    }
    let payload = envelope
        .get("payload")
        .ok_or_else(|| Error::Checksum("artifact has no payload".into()))?;
    let stored = envelope.get("checksum").and_then(Value::as_str).unwrap_or_default();
    let actual = checksum(payload)?;
    if stored != actual {
        return Err(Error::Checksum(format!("stored {stored}, computed {actual}")));
    }
    Ok(serde_json::from_value(payload.clone())?)
}
