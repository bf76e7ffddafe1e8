use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::{CliError, CliResult, RunConfig};

/// Version of the JSON documents this tool writes.
pub const SCHEMA_VERSION: u32 = 1;

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::domain(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::domain(format!("{}: {e}", path.display())))
}

/// Writes `header` then `rows` as CSV.
pub fn write_csv<R>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> CliResult<()>
where
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let io_err = |e: csv::Error| CliError::usage(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

/// `run.json`: the resolved configuration, derived seeds and tool version.
pub fn write_run_json(out: &Path, command: &str, cfg: &RunConfig) -> CliResult<()> {
    let stack = cfg.seeded_stack();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": cfg.seed,
        "derived_seeds": {
            "split": stack.split.seed,
            "forest": stack.learners.forest.seed,
            "boost": stack.learners.boost.seed,
            "linear": stack.learners.linear.seed,
            "meta": stack.meta.seed,
        },
        "config": cfg,
    });
    write_json(&out.join("run.json"), &doc)
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
