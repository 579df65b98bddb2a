//! Report formatting, provenance and atomic output.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{CliError, CliResult};
use crate::io::{format_sig, write_atomic};

pub const REPORT_SIG_DIGITS: usize = 6;

/// `v` rounded to the report precision, as text.
pub fn sig(v: f64) -> String {
    format_sig(v, REPORT_SIG_DIGITS)
}

/// `v` rounded to the report precision, as a JSON number (`null` if not finite).
pub fn sig_json(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = sig(v).parse().unwrap_or(v);
    serde_json::Number::from_f64(rounded)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> CliResult<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub params: Value,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(command: &'static str, seed: Option<u64>, params: &impl Serialize, inputs: Vec<InputDigest>) -> Self {
        Self {
            tool: format!("fruitsize {}", env!("CARGO_PKG_VERSION")),
            command,
            seed,
            params: serde_json::to_value(params).unwrap_or(Value::Null),
            inputs,
        }
    }
}

pub fn to_json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Writes `<out>.json` and `<out>.csv` (whichever extension `out` has, the
/// other file goes next to it). Without `--out` the csv goes to stdout.
pub fn emit(out: Option<&Path>, csv: &str, json: &Value) -> CliResult<()> {
    let Some(out) = out else {
        print!("{csv}");
        return Ok(());
    };
    let (json_path, csv_path) = paired_paths(out);
    let json_text = to_json_text(json);
    write_atomic(&json_path, json_text.as_bytes()).map_err(CliError::runtime)?;
    write_atomic(&csv_path, csv.as_bytes()).map_err(CliError::runtime)?;
    Ok(())
}

pub fn paired_paths(out: &Path) -> (PathBuf, PathBuf) {
    (out.with_extension("json"), out.with_extension("csv"))
}

/// csv field: quoted only when it contains a delimiter, quote or newline.
pub fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
