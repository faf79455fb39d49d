//! Row output: CSV with a header or JSON lines, plus a `.meta.json` sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

pub type Row = Map<String, Value>;

/// Flattens a serializable record into one row; nested objects become
/// `outer_inner` columns.
pub fn row<T: Serialize>(record: &T) -> Row {
    let mut out = Row::new();
    flatten("", serde_json::to_value(record).expect("record serializes"), &mut out);
    out
}

fn flatten(prefix: &str, v: Value, out: &mut Row) {
    match v {
        Value::Object(m) => {
            for (k, inner) in m {
                let key = if prefix.is_empty() { k } else { format!("{prefix}_{k}") };
                flatten(&key, inner, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other);
        }
    }
}

/// Prepends the provenance columns every row carries.
pub fn stamp(rows: Vec<Row>, seed: u64, digest: &str) -> Vec<Row> {
    rows.into_iter()
        .map(|r| {
            let mut out = Row::new();
            out.insert("seed".into(), seed.into());
            out.insert("config_digest".into(), digest.into());
            out.insert("version".into(), dprlab_core::VERSION.into());
            out.extend(r);
            out
        })
        .collect()
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        other => other.to_string(),
    }
}

pub fn write_rows<W: Write>(rows: &[Row], format: &str, sink: W) -> Result<(), CliError> {
    match format {
        "jsonl" => {
            let mut sink = sink;
            for r in rows {
                serde_json::to_writer(&mut sink, r).map_err(|e| CliError::Io(e.to_string()))?;
                writeln!(sink).map_err(|e| CliError::Io(e.to_string()))?;
            }
            Ok(())
        }
        "csv" => {
            let mut header: Vec<&String> = Vec::new();
            for r in rows {
                for k in r.keys() {
                    if !header.contains(&k) {
                        header.push(k);
                    }
                }
            }
            let mut w = csv::Writer::from_writer(sink);
            let io = |e: csv::Error| CliError::Io(e.to_string());
            w.write_record(header.iter().map(|h| h.as_str())).map_err(io)?;
            for r in rows {
                w.write_record(header.iter().map(|h| r.get(*h).map(cell).unwrap_or_default()))
                    .map_err(io)?;
            }
            w.flush().map_err(|e| CliError::Io(e.to_string()))
        }
        other => Err(CliError::Config(format!("unknown format {other:?}"))),
    }
}

pub fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}
