//! JSON reports and CSV row dumps.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;
use crate::format::write_atomic;

pub const SCHEMA_VERSION: u32 = 1;

/// Wraps a command body with the schema version and command name.
pub fn envelope(command: &str, body: Value) -> Value {
    let mut out = serde_json::Map::new();
    out.insert("schema_version".into(), SCHEMA_VERSION.into());
    out.insert("command".into(), command.into());
    if let Value::Object(map) = body {
        out.extend(map);
    }
    Value::Object(out)
}

/// Writes the report to `path`, or to stdout without one.
pub fn emit(path: Option<&Path>, report: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Format(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}
