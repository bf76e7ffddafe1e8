//! Semantic-contextual stream: supervectors from embedding providers and the
//! one-hot / multi-hot context block.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::case::{Case, ContextualFeatures};
use crate::error::{Error, Result};

pub const EMBED_FORMAT: &str = "ethics-embed";
pub const EMBED_VERSION: u64 = 1;

/// Widths of the three embedding segments (E1, E2, E3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingDims(pub [usize; 3]);

impl Default for EmbeddingDims {
    fn default() -> Self {
        EmbeddingDims([384, 768, 768])
    }
}

impl EmbeddingDims {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("embedding dims must be positive, got {:?}", self.0)));
        }
        Ok(())
    }
}

impl FromStr for EmbeddingDims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("cannot parse embedding dims `{s}`")))?;
        let dims: [usize; 3] = parts
            .try_into()
            .map_err(|_| Error::Config(format!("expected three embedding dims, got `{s}`")))?;
        let dims = EmbeddingDims(dims);
        dims.validate()?;
        Ok(dims)
    }
}

/// Per-case (E1, E2, E3) vectors stored at 32-bit precision.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dims: EmbeddingDims,
    rows: BTreeMap<String, [Vec<f32>; 3]>,
}

impl EmbeddingTable {
    pub fn new(dims: EmbeddingDims) -> Result<Self> {
        dims.validate()?;
        Ok(EmbeddingTable {
            dims,
            rows: BTreeMap::new(),
        })
    }

    pub fn dims(&self) -> EmbeddingDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, case_id: &str) -> bool {
        self.rows.contains_key(case_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn insert(&mut self, case_id: impl Into<String>, vectors: [Vec<f32>; 3]) -> Result<()> {
        let case_id = case_id.into();
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != self.dims.0[i] {
                return Err(Error::EmbeddingFormat(format!(
                    "case `{case_id}`: e{} has length {}, expected {}",
                    i + 1,
                    v.len(),
                    self.dims.0[i]
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::EmbeddingFormat(format!(
                    "case `{case_id}`: e{} contains non-finite values",
                    i + 1
                )));
            }
        }
        self.rows.insert(case_id, vectors);
        Ok(())
    }

    pub fn get(&self, case_id: &str) -> Result<&[Vec<f32>; 3]> {
        self.rows
            .get(case_id)
            .ok_or_else(|| Error::MissingEmbedding(case_id.to_string()))
    }

    /// Reads the JSONL embedding file: a header object
    /// `{"format":"ethics-embed","version":1,"dims":[d1,d2,d3]}` followed by
    /// one `{"case_id", "e1", "e2", "e3"}` object per line.
    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let header = loop {
            match lines.next() {
                None => return Err(Error::EmbeddingFormat("empty file, header missing".into())),
                Some((_, line)) => {
                    let line = line.map_err(|e| Error::io(path, e))?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
            }
        };
        let header: Value = serde_json::from_str(&header)
            .map_err(|e| Error::EmbeddingFormat(format!("bad header: {e}")))?;
        if header.get("format").and_then(Value::as_str) != Some(EMBED_FORMAT) {
            return Err(Error::EmbeddingFormat(format!("header format is not `{EMBED_FORMAT}`")));
        }
        match header.get("version").and_then(Value::as_u64) {
            Some(EMBED_VERSION) => {}
            other => {
                return Err(Error::EmbeddingFormat(format!(
                    "unsupported version {other:?}, expected {EMBED_VERSION}"
                )))
            }
        }
        let dims: [usize; 3] = serde_json::from_value(header.get("dims").cloned().unwrap_or(Value::Null))
            .map_err(|e| Error::EmbeddingFormat(format!("bad dims in header: {e}")))?;
        let mut table = EmbeddingTable::new(EmbeddingDims(dims))?;

        #[derive(Deserialize)]
        struct Record {
            case_id: String,
            e1: Vec<f32>,
            e2: Vec<f32>,
            e3: Vec<f32>,
        }
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| Error::EmbeddingFormat(format!("line {}: {e}", i + 1)))?;
            if table.contains(&rec.case_id) {
                return Err(Error::EmbeddingFormat(format!("duplicate case_id `{}`", rec.case_id)));
            }
            table.insert(rec.case_id, [rec.e1, rec.e2, rec.e3])?;
        }
        Ok(table)
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let header = json!({"format": EMBED_FORMAT, "version": EMBED_VERSION, "dims": self.dims.0});
        writeln!(out, "{header}").map_err(|e| Error::io(path, e))?;
        for (id, [e1, e2, e3]) in &self.rows {
            let rec = json!({"case_id": id, "e1": e1, "e2": e2, "e3": e3});
            writeln!(out, "{rec}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn supervector(&self, case_id: &str) -> Result<Supervector> {
        let rows = self.get(case_id)?;
        Ok(Supervector {
            segments: std::array::from_fn(|i| rows[i].iter().map(|&x| x as f64).collect()),
        })
    }
}

/// The three embedding segments of one case, widened to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Supervector {
    pub segments: [Vec<f64>; 3],
}

impl Supervector {
    pub fn len(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// E1 ‖ E2 ‖ E3.
    pub fn to_vec(&self) -> Vec<f64> {
        self.segments.concat()
    }
}

pub fn build_supervector(table: &EmbeddingTable, case_id: &str) -> Result<Vec<f64>> {
    Ok(table.supervector(case_id)?.to_vec())
}

fn fnv1a(salt: u64, token: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in salt.to_le_bytes().iter().chain(token.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(PRIME);
    }
    // FNV alone mixes the high bits poorly; finish with the SplitMix64 mixer.
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^ (h >> 31)
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Signed feature hashing of lowercase unigrams and bigrams, L2-normalized.
///
/// Text without tokens embeds to the zero vector.
pub fn hash_embed(text: &str, dim: usize, salt: u64) -> Vec<f64> {
    assert!(dim > 0, "hash_embed: dim must be positive");
    let mut v = vec![0.0; dim];
    let toks: Vec<String> = tokens(text).collect();
    let mut add = |feature: &str| {
        let h = fnv1a(salt, feature);
        let bucket = (h % dim as u64) as usize;
        v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    };
    for t in &toks {
        add(t);
    }
    for pair in toks.windows(2) {
        add(&format!("{} {}", pair[0], pair[1]));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingProviderSpec {
    /// Precomputed embedding JSONL file.
    File { path: PathBuf },
    /// Deterministic hashing stand-in: E1 over selftext, E2 and E3 over the
    /// summary, with salts 1, 2 and 3.
    Hash { dims: EmbeddingDims },
    /// OpenAI-compatible `/embeddings` endpoint, one model per segment.
    Http {
        url: String,
        models: [String; 3],
        token_env: Option<String>,
    },
}

impl FromStr for EmbeddingProviderSpec {
    type Err = Error;

    /// `hash`, `hash:d1,d2,d3`, an `http(s)://` URL, or a file path.
    fn from_str(s: &str) -> Result<Self> {
        if s == "hash" {
            return Ok(EmbeddingProviderSpec::Hash {
                dims: EmbeddingDims::default(),
            });
        }
        if let Some(dims) = s.strip_prefix("hash:") {
            return Ok(EmbeddingProviderSpec::Hash { dims: dims.parse()? });
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(EmbeddingProviderSpec::Http {
                url: s.to_string(),
                models: [
                    "all-MiniLM-L6-v2".into(),
                    "all-distilroberta-v1".into(),
                    "multi-qa-mpnet-base-dot-v1".into(),
                ],
                token_env: None,
            });
        }
        Ok(EmbeddingProviderSpec::File { path: PathBuf::from(s) })
    }
}

impl EmbeddingProviderSpec {
    /// Produces embeddings for `cases`. File tables must cover every case.
    pub fn embed(&self, cases: &[Case]) -> Result<EmbeddingTable> {
        match self {
            EmbeddingProviderSpec::File { path } => {
                let table = EmbeddingTable::load_jsonl(path)?;
                if let Some(missing) = cases.iter().find(|c| !table.contains(&c.case_id)) {
                    return Err(Error::MissingEmbedding(missing.case_id.clone()));
                }
                Ok(table)
            }
            EmbeddingProviderSpec::Hash { dims } => hash_table(cases, *dims),
            #[cfg(feature = "http")]
            EmbeddingProviderSpec::Http { url, models, token_env } => {
                http_table(cases, url, models, token_env.as_deref())
            }
            #[cfg(not(feature = "http"))]
            EmbeddingProviderSpec::Http { .. } => Err(Error::Config("built without HTTP support".into())),
        }
    }
}

pub fn hash_table(cases: &[Case], dims: EmbeddingDims) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(dims)?;
    for case in cases {
        let summary = if case.summary.trim().is_empty() { &case.selftext } else { &case.summary };
        let to32 = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<f32>>();
        table.insert(
            case.case_id.clone(),
            [
                to32(hash_embed(&case.selftext, dims.0[0], 1)),
                to32(hash_embed(summary, dims.0[1], 2)),
                to32(hash_embed(summary, dims.0[2], 3)),
            ],
        )?;
    }
    Ok(table)
}

#[cfg(feature = "http")]
fn http_table(cases: &[Case], url: &str, models: &[String; 3], token_env: Option<&str>) -> Result<EmbeddingTable> {
    let token = match token_env {
        Some(var) => Some(std::env::var(var).map_err(|_| Error::Config(format!("environment variable {var} is not set")))?),
        None => None,
    };
    let mut segments: [Vec<Vec<f32>>; 3] = Default::default();
    for (slot, model) in models.iter().enumerate() {
        let inputs: Vec<&str> = cases
            .iter()
            .map(|c| if slot == 0 || c.summary.trim().is_empty() { c.selftext.as_str() } else { c.summary.as_str() })
            .collect();
        let body = json!({"model": model, "input": inputs});
        let mut req = ureq::post(url);
        if let Some(token) = &token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| Error::Http(e.to_string()))?;
        let value: Value = resp.body_mut().read_json().map_err(|e| Error::Http(e.to_string()))?;
        let data = value
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::EmbeddingFormat("response has no `data` array".into()))?;
        if data.len() != cases.len() {
            return Err(Error::EmbeddingFormat(format!(
                "model {model}: {} embeddings for {} inputs",
                data.len(),
                cases.len()
            )));
        }
        for item in data {
            let v: Vec<f32> = serde_json::from_value(item.get("embedding").cloned().unwrap_or(Value::Null))
                .map_err(|e| Error::EmbeddingFormat(format!("bad embedding: {e}")))?;
            segments[slot].push(v);
        }
    }
    let dims = EmbeddingDims(std::array::from_fn(|i| segments[i].first().map_or(1, Vec::len)));
    let mut table = EmbeddingTable::new(dims)?;
    let [s1, s2, s3] = segments;
    for (((case, e1), e2), e3) in cases.iter().zip(s1).zip(s2).zip(s3) {
        table.insert(case.case_id.clone(), [e1, e2, e3])?;
    }
    Ok(table)
}

/// Categorical context fields, in block order.
pub const CONTEXT_FIELDS: [&str; 6] = [
    "severity",
    "duration",
    "utility",
    "moral_intention",
    "principles_upheld",
    "principles_violated",
];

fn field_values<'a>(ctx: &'a ContextualFeatures, field: usize) -> Vec<&'a str> {
    let single = |s: &'a String| if s.is_empty() { vec![] } else { vec![s.as_str()] };
    match field {
        0 => single(&ctx.severity),
        1 => single(&ctx.duration),
        2 => single(&ctx.utility),
        3 => single(&ctx.moral_intention),
        4 => ctx.principles_upheld.iter().map(String::as_str).collect(),
        5 => ctx.principles_violated.iter().map(String::as_str).collect(),
        _ => unreachable!("context field index out of range"),
    }
}

/// Vocabularies for the categorical context fields, fixed at fit time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEncoder {
    /// Sorted, deduplicated categories per field in [`CONTEXT_FIELDS`] order.
    pub vocabularies: Vec<Vec<String>>,
}

impl ContextEncoder {
    pub fn width(&self) -> usize {
        self.vocabularies.iter().map(Vec::len).sum()
    }

    pub fn block_widths(&self) -> Vec<usize> {
        self.vocabularies.iter().map(Vec::len).collect()
    }
}

pub fn fit_context_encoder(cases: &[Case]) -> ContextEncoder {
    let vocabularies = (0..CONTEXT_FIELDS.len())
        .map(|field| {
            cases
                .iter()
                .flat_map(|c| field_values(&c.context, field))
                .map(str::to_string)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect();
    ContextEncoder { vocabularies }
}

/// One-hot for single-valued fields, multi-hot for the principle lists.
/// Categories unseen at fit time contribute nothing.
pub fn encode_context(enc: &ContextEncoder, ctx: &ContextualFeatures) -> Vec<f64> {
    let mut out = Vec::with_capacity(enc.width());
    for (field, vocab) in enc.vocabularies.iter().enumerate() {
        let mut block = vec![0.0; vocab.len()];
        for value in field_values(ctx, field) {
            if let Ok(pos) = vocab.binary_search_by(|v| v.as_str().cmp(value)) {
                block[pos] = 1.0;
            }
        }
        out.extend(block);
    }
    out
}
