//! Provenance-stamped CSV and JSON files, written atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use tempfile::NamedTempFile;

use crate::config::RunConfig;
use crate::error::CliError;

pub const TOOL: &str = "rgorbit";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What produced a file: tool version, verb, its arguments, the resolved
/// configuration and, where it differs from the file, the model in use.
pub fn provenance(command: &str, arguments: Value, config: &RunConfig, resolved_model: Option<Value>) -> Value {
    let mut p = json!({
        "tool": TOOL,
        "version": VERSION,
        "command": command,
        "arguments": arguments,
        "config": config,
    });
    if let Some(m) = resolved_model {
        p["resolved_model"] = m;
    }
    p
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so a failed run never leaves a partial file behind.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| CliError::Io(e.error))?;
    Ok(path)
}

/// A JSON document whose first key is `provenance`.
pub fn json_document(provenance: &Value, body: impl Serialize) -> Result<Vec<u8>, CliError> {
    let mut doc = serde_json::Map::new();
    doc.insert("provenance".into(), provenance.clone());
    match serde_json::to_value(body)? {
        Value::Object(fields) => doc.extend(fields),
        other => {
            doc.insert("data".into(), other);
        }
    }
    let mut out = serde_json::to_vec_pretty(&Value::Object(doc))?;
    out.push(b'\n');
    Ok(out)
}

/// CSV with `# provenance: {…}` and any `extra` comment lines ahead of the
/// header row.
pub fn csv_document<R: Serialize>(
    provenance: &Value,
    extra: &[(&str, Value)],
    rows: &[R],
) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    writeln!(out, "# provenance: {provenance}")?;
    for (key, value) in extra {
        writeln!(out, "# {key}: {value}")?;
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

/// CSV for rows whose width is only known at run time.
pub fn csv_dynamic(
    provenance: &Value,
    extra: &[(&str, Value)],
    header: &[String],
    rows: &[Vec<String>],
) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    writeln!(out, "# provenance: {provenance}")?;
    for (key, value) in extra {
        writeln!(out, "# {key}: {value}")?;
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}
