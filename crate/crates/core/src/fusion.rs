//! Unified feature space: block concatenation with a recorded layout, the
//! ablation presets, and per-dimension standardization.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::case::Case;
use crate::error::{Error, Result};
use crate::normative::{derive_prior_features, prior_feature_vector, PRIOR_FEATURE_WIDTH};
use crate::semantic::{encode_context, ContextEncoder, EmbeddingDims, EmbeddingTable, Supervector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    /// Prior block plus plurality features.
    #[serde(rename = "N_P")]
    NormativePrior,
    #[serde(rename = "SV")]
    Supervector,
    #[serde(rename = "C")]
    Context,
}

impl Block {
    pub const ORDER: [Block; 3] = [Block::NormativePrior, Block::Supervector, Block::Context];

    pub fn name(self) -> &'static str {
        match self {
            Block::NormativePrior => "N_P",
            Block::Supervector => "SV",
            Block::Context => "C",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Selected blocks, indexed by [`Block::ORDER`].
    pub blocks: [bool; 3],
    /// Active embeddings E1, E2, E3.
    pub embeddings: [bool; 3],
}

impl FusionConfig {
    pub fn new(blocks: &[Block], embeddings: [bool; 3]) -> Result<Self> {
        let mut mask = [false; 3];
        for b in blocks {
            mask[Block::ORDER.iter().position(|o| o == b).unwrap()] = true;
        }
        let cfg = FusionConfig { blocks: mask, embeddings };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn full() -> Self {
        FusionConfig {
            blocks: [true; 3],
            embeddings: [true; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.blocks.iter().any(|&b| b) {
            return Err(Error::Config("fusion needs at least one block".into()));
        }
        if self.uses(Block::Supervector) && !self.embeddings.iter().any(|&e| e) {
            return Err(Error::Config("SV block selected with no active embeddings".into()));
        }
        Ok(())
    }

    pub fn uses(&self, block: Block) -> bool {
        self.blocks[Block::ORDER.iter().position(|&o| o == block).unwrap()]
    }

    /// Declared width of each selected block, in layout order.
    pub fn widths(&self, dims: EmbeddingDims, context_width: usize) -> Vec<(Block, usize)> {
        let sv: usize = (0..3).filter(|&i| self.embeddings[i]).map(|i| dims.0[i]).sum();
        Block::ORDER
            .into_iter()
            .filter(|&b| self.uses(b))
            .map(|b| {
                let w = match b {
                    Block::NormativePrior => PRIOR_FEATURE_WIDTH,
                    Block::Supervector => sv,
                    Block::Context => context_width,
                };
                (b, w)
            })
            .collect()
    }
}

impl fmt::Display for FusionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blocks: Vec<&str> = Block::ORDER
            .iter()
            .filter(|b| self.uses(**b))
            .map(|b| b.name())
            .collect();
        let embeds: Vec<String> = (0..3)
            .filter(|&i| self.embeddings[i])
            .map(|i| format!("E{}", i + 1))
            .collect();
        write!(f, "{} [{}]", blocks.join("+"), embeds.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub block: Block,
    pub offset: usize,
    pub len: usize,
}

pub type Layout = Vec<Segment>;

#[derive(Debug, Clone, PartialEq)]
pub struct FusedVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

pub fn assemble(
    config: &FusionConfig,
    prior_vec: Option<&[f64]>,
    supervector: Option<&Supervector>,
    context_vec: Option<&[f64]>,
) -> Result<FusedVector> {
    config.validate()?;
    let mut values = Vec::new();
    let mut layout = Vec::new();
    for block in Block::ORDER {
        if !config.uses(block) {
            continue;
        }
        let offset = values.len();
        match block {
            Block::NormativePrior => {
                values.extend_from_slice(prior_vec.ok_or(Error::MissingBlock("N_P"))?);
            }
            Block::Supervector => {
                let sv = supervector.ok_or(Error::MissingBlock("SV"))?;
                for (i, seg) in sv.segments.iter().enumerate() {
                    if config.embeddings[i] {
                        values.extend_from_slice(seg);
                    }
                }
            }
            Block::Context => {
                values.extend_from_slice(context_vec.ok_or(Error::MissingBlock("C"))?);
            }
        }
        layout.push(Segment {
            block,
            offset,
            len: values.len() - offset,
        });
    }
    Ok(FusedVector { values, layout })
}

/// Fitted per-case featurization: fusion config plus the context vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub fusion: FusionConfig,
    pub encoder: ContextEncoder,
    pub dims: EmbeddingDims,
    pub layout: Layout,
}

impl Featurizer {
    pub fn new(fusion: FusionConfig, encoder: ContextEncoder, dims: EmbeddingDims) -> Result<Self> {
        fusion.validate()?;
        let mut offset = 0;
        let layout = fusion
            .widths(dims, encoder.width())
            .into_iter()
            .map(|(block, len)| {
                let seg = Segment { block, offset, len };
                offset += len;
                seg
            })
            .collect();
        Ok(Featurizer {
            fusion,
            encoder,
            dims,
            layout,
        })
    }

    pub fn width(&self) -> usize {
        self.layout.iter().map(|s| s.len).sum()
    }

    pub fn featurize(&self, case: &Case, table: Option<&EmbeddingTable>) -> Result<FusedVector> {
        let prior_vec = if self.fusion.uses(Block::NormativePrior) {
            let prior = case.prior.ok_or_else(|| {
                Error::Config(format!("case `{}` has no prior but the N_P block is selected", case.case_id))
            })?;
            Some(prior_feature_vector(&derive_prior_features(&prior)))
        } else {
            None
        };
        let sv = if self.fusion.uses(Block::Supervector) {
            let table = table.ok_or(Error::MissingBlock("SV"))?;
            if table.dims() != self.dims {
                return Err(Error::EmbeddingFormat(format!(
                    "embedding dims {:?} differ from the fitted {:?}",
                    table.dims().0,
                    self.dims.0
                )));
            }
            Some(table.supervector(&case.case_id)?)
        } else {
            None
        };
        let ctx = self
            .fusion
            .uses(Block::Context)
            .then(|| encode_context(&self.encoder, &case.context));
        let fused = assemble(&self.fusion, prior_vec.as_deref(), sv.as_ref(), ctx.as_deref())?;
        debug_assert_eq!(fused.layout, self.layout);
        Ok(fused)
    }

    pub fn featurize_all(&self, cases: &[Case], table: Option<&EmbeddingTable>) -> Result<Vec<Vec<f64>>> {
        cases
            .iter()
            .map(|c| self.featurize(c, table).map(|f| f.values))
            .collect()
    }
}

/// Per-dimension standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero marks a pass-through column.
    pub scale: Vec<f64>,
}

const ZERO_VARIANCE: f64 = 1e-12;

impl Scaler {
    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.width() {
            return Err(Error::WidthMismatch {
                expected: self.width(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&x, (&m, &s))| if s > 0.0 { (x - m) / s } else { x })
            .collect())
    }
}

pub fn standardize_fit(rows: &[Vec<f64>]) -> Result<Scaler> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Config("cannot fit a scaler on an empty matrix".into()))?;
    let d = first.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::WidthMismatch { expected: d, got: bad.len() });
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > ZERO_VARIANCE {
                sd
            } else {
                0.0
            }
        })
        .collect();
    Ok(Scaler { mean, scale })
}

pub fn standardize_apply(scaler: &Scaler, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|r| scaler.apply(r)).collect()
}
