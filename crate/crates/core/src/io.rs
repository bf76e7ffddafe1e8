//! Case CSV / JSONL ingestion and serialization.
//!
//! CSV: header row with the exact field names in [`CSV_HEADER`], RFC-4180
//! quoting, list-valued fields joined with `;`. JSONL: one object per line with
//! the same names, lists as arrays and the prior nested as
//! `{"alpha":..,"beta":..,"gamma":..}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::case::{check_unique_ids, Case, ContextualFeatures, PriorSimplex};
use crate::error::{Error, Result};
use crate::taxonomy::{NormativeSchool, Subtheory};

pub const CSV_HEADER: [&str; 22] = [
    "case_id",
    "selftext",
    "summary",
    "active_agent",
    "passive_agent",
    "agent_relationship",
    "action",
    "domain",
    "ethical_issues",
    "consequence",
    "severity",
    "utility",
    "duration",
    "moral_intention",
    "principles_upheld",
    "principles_violated",
    "moral_decision",
    "alpha",
    "beta",
    "gamma",
    "normative_school",
    "ethics_subtheory",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseFormat {
    Csv,
    Jsonl,
}

impl CaseFormat {
    /// Guesses the format from a file extension (`.csv`, `.jsonl`, `.json`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(CaseFormat::Csv),
            "jsonl" | "ndjson" | "json" => Some(CaseFormat::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for CaseFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(CaseFormat::Csv),
            "jsonl" => Ok(CaseFormat::Jsonl),
            other => Err(Error::Config(format!("unknown case format `{other}`"))),
        }
    }
}

pub fn load_cases(path: &Path, format: CaseFormat) -> Result<Vec<Case>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let cases = match format {
        CaseFormat::Csv => read_csv(file)?,
        CaseFormat::Jsonl => read_jsonl(BufReader::new(file))?,
    };
    check_unique_ids(&cases)?;
    Ok(cases)
}

pub fn write_cases(path: &Path, format: CaseFormat, cases: &[Case]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        CaseFormat::Csv => write_csv(file, cases),
        CaseFormat::Jsonl => {
            let mut out = BufWriter::new(file);
            for case in cases {
                serde_json::to_writer(&mut out, &case_to_json(case))?;
                out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            out.flush().map_err(|e| Error::io(path, e))
        }
    }
}

fn split_list(raw: &str) -> Vec<String> {
    raw.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_labels(
    row: usize,
    school: &str,
    sub: &str,
) -> Result<(Option<NormativeSchool>, Option<Subtheory>)> {
    let school = match school.trim() {
        "" => None,
        s => Some(
            s.parse::<NormativeSchool>()
                .map_err(|e| Error::malformed(row, "normative_school", e.to_string()))?,
        ),
    };
    let sub = match sub.trim() {
        "" => None,
        s => Some(
            s.parse::<Subtheory>()
                .map_err(|e| Error::malformed(row, "ethics_subtheory", e.to_string()))?,
        ),
    };
    Ok((school, sub))
}

fn parse_prior(row: usize, scores: [Option<f64>; 3]) -> Result<Option<PriorSimplex>> {
    match scores {
        [None, None, None] => Ok(None),
        [Some(a), Some(b), Some(g)] => PriorSimplex::from_scores(a, b, g)
            .map(Some)
            .map_err(|e| Error::malformed(row, "prior", e.to_string())),
        _ => Err(Error::malformed(
            row,
            "prior",
            "alpha, beta and gamma must be given together",
        )),
    }
}

fn finish(row: usize, case: Case) -> Result<Case> {
    if case.case_id.trim().is_empty() {
        return Err(Error::malformed(row, "case_id", "empty case_id"));
    }
    case.check_labels()
        .map_err(|m| Error::malformed(row, "ethics_subtheory", m))?;
    Ok(case)
}

fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<Case>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != CSV_HEADER {
        let col = names
            .iter()
            .zip(CSV_HEADER.iter())
            .position(|(a, b)| a != b)
            .unwrap_or(names.len().min(CSV_HEADER.len()));
        return Err(Error::malformed(
            0,
            CSV_HEADER.get(col).copied().unwrap_or("header"),
            format!("header does not match the case schema at column {}", col + 1),
        ));
    }

    let mut cases = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::malformed(row, "record", e.to_string()))?;
        let get = |idx: usize| record.get(idx).unwrap_or("");
        let score = |idx: usize| -> Result<Option<f64>> {
            let raw = get(idx).trim();
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse::<f64>()
                .map(Some)
                .map_err(|_| Error::malformed(row, CSV_HEADER[idx], format!("not a number: `{raw}`")))
        };
        let prior = parse_prior(row, [score(17)?, score(18)?, score(19)?])?;
        let (school_label, subtheory_label) = parse_labels(row, get(20), get(21))?;
        let case = Case {
            case_id: get(0).to_string(),
            selftext: get(1).to_string(),
            summary: get(2).to_string(),
            context: ContextualFeatures {
                active_agent: get(3).to_string(),
                passive_agent: get(4).to_string(),
                agent_relationship: get(5).to_string(),
                action: get(6).to_string(),
                domain: get(7).to_string(),
                ethical_issues: split_list(get(8)),
                consequence: get(9).to_string(),
                severity: get(10).to_string(),
                utility: get(11).to_string(),
                duration: get(12).to_string(),
                moral_intention: get(13).to_string(),
                principles_upheld: split_list(get(14)),
                principles_violated: split_list(get(15)),
            },
            prior,
            moral_decision: get(16).to_string(),
            school_label,
            subtheory_label,
        };
        cases.push(finish(row, case)?);
    }
    Ok(cases)
}

fn write_csv<W: std::io::Write>(writer: W, cases: &[Case]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    for case in cases {
        let ctx = &case.context;
        let (a, b, g) = match case.prior {
            Some(p) => (p.alpha().to_string(), p.beta().to_string(), p.gamma().to_string()),
            None => Default::default(),
        };
        wtr.write_record([
            case.case_id.as_str(),
            &case.selftext,
            &case.summary,
            &ctx.active_agent,
            &ctx.passive_agent,
            &ctx.agent_relationship,
            &ctx.action,
            &ctx.domain,
            &ctx.ethical_issues.join(";"),
            &ctx.consequence,
            &ctx.severity,
            &ctx.utility,
            &ctx.duration,
            &ctx.moral_intention,
            &ctx.principles_upheld.join(";"),
            &ctx.principles_violated.join(";"),
            &case.moral_decision,
            &a,
            &b,
            &g,
            case.school_label.map(|s| s.name()).unwrap_or(""),
            case.subtheory_label.map(|s| s.name()).unwrap_or(""),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn case_to_json(case: &Case) -> Value {
    let ctx = &case.context;
    json!({
        "case_id": case.case_id,
        "selftext": case.selftext,
        "summary": case.summary,
        "active_agent": ctx.active_agent,
        "passive_agent": ctx.passive_agent,
        "agent_relationship": ctx.agent_relationship,
        "action": ctx.action,
        "domain": ctx.domain,
        "ethical_issues": ctx.ethical_issues,
        "consequence": ctx.consequence,
        "severity": ctx.severity,
        "utility": ctx.utility,
        "duration": ctx.duration,
        "moral_intention": ctx.moral_intention,
        "principles_upheld": ctx.principles_upheld,
        "principles_violated": ctx.principles_violated,
        "moral_decision": case.moral_decision,
        "prior": case.prior,
        "normative_school": case.school_label,
        "ethics_subtheory": case.subtheory_label,
    })
}

fn json_str(row: usize, obj: &Map<String, Value>, field: &str) -> Result<String> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(other) => Err(Error::malformed(row, field, format!("expected a string, got {other}"))),
    }
}

fn json_list(row: usize, obj: &Map<String, Value>, field: &str) -> Result<Vec<String>> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(split_list(s)),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(Error::malformed(row, field, format!("list item {other} is not a string"))),
            })
            .collect(),
        Some(other) => Err(Error::malformed(row, field, format!("expected a list, got {other}"))),
    }
}

fn json_prior(row: usize, obj: &Map<String, Value>) -> Result<Option<PriorSimplex>> {
    let prior = match obj.get("prior") {
        None | Some(Value::Null) => return Ok(None),
        Some(Value::Object(p)) => p,
        Some(other) => return Err(Error::malformed(row, "prior", format!("expected an object, got {other}"))),
    };
    let score = |name: &str| -> Result<Option<f64>> {
        match prior.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| Error::malformed(row, name, format!("not a number: {v}"))),
        }
    };
    parse_prior(row, [score("alpha")?, score("beta")?, score("gamma")?])
}

fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Case>> {
    let mut cases = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::malformed(row, "line", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(row, "json", e.to_string()))?;
        let Value::Object(obj) = value else {
            return Err(Error::malformed(row, "json", "each line must be a JSON object"));
        };
        let (school_label, subtheory_label) = parse_labels(
            row,
            &json_str(row, &obj, "normative_school")?,
            &json_str(row, &obj, "ethics_subtheory")?,
        )?;
        let case = Case {
            case_id: json_str(row, &obj, "case_id")?,
            selftext: json_str(row, &obj, "selftext")?,
            summary: json_str(row, &obj, "summary")?,
            context: ContextualFeatures {
                active_agent: json_str(row, &obj, "active_agent")?,
                passive_agent: json_str(row, &obj, "passive_agent")?,
                agent_relationship: json_str(row, &obj, "agent_relationship")?,
                action: json_str(row, &obj, "action")?,
                domain: json_str(row, &obj, "domain")?,
                ethical_issues: json_list(row, &obj, "ethical_issues")?,
                consequence: json_str(row, &obj, "consequence")?,
                severity: json_str(row, &obj, "severity")?,
                utility: json_str(row, &obj, "utility")?,
                duration: json_str(row, &obj, "duration")?,
                moral_intention: json_str(row, &obj, "moral_intention")?,
                principles_upheld: json_list(row, &obj, "principles_upheld")?,
                principles_violated: json_list(row, &obj, "principles_violated")?,
            },
            prior: json_prior(row, &obj)?,
            moral_decision: json_str(row, &obj, "moral_decision")?,
            school_label,
            subtheory_label,
        };
        cases.push(finish(row, case)?);
    }
    Ok(cases)
}
