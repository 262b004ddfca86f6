//! Report documents and curve tables.
//!
//! Documents serialize with sorted object keys and shortest round-trip floats,
//! so equal inputs give byte-identical files.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flag {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Flag {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Flag {
        Flag { name: name.into(), pass, detail: detail.into() }
    }
}

/// One row of a tabulated curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub parameter: f64,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub input: Value,
    pub seed: u64,
    pub grid: Value,
    pub results: Value,
    pub flags: Vec<Flag>,
}

/// Copy of `v` with every object's keys in sorted order.
pub fn sorted(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            Value::Object(keys.into_iter().map(|k| (k.clone(), sorted(&m[k]))).collect())
        }
        Value::Array(a) => Value::Array(a.iter().map(sorted).collect()),
        other => other.clone(),
    }
}

/// Hex sha256 of the canonical (sorted-key, compact) form of `v`.
pub fn content_hash(v: &Value) -> String {
    let text = serde_json::to_string(&sorted(v)).expect("json value");
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl Report {
    pub fn new(input: Value, seed: u64, grid: Value, results: Value, flags: Vec<Flag>) -> Report {
        Report { input, seed, grid, results, flags }
    }

    pub fn passed(&self) -> bool {
        self.flags.iter().all(|f| f.pass)
    }

    pub fn to_value(&self) -> Value {
        let mut flags = self.flags.clone();
        flags.sort_by(|a, b| a.name.cmp(&b.name));
        sorted(&serde_json::json!({
            "tool_version": TOOL_VERSION,
            "input_hash": content_hash(&self.input),
            "input": self.input,
            "seed": self.seed,
            "grid": self.grid,
            "results": self.results,
            "flags": flags,
        }))
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("json value");
        s.push('\n');
        s
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with columns `parameter,value,tolerance,pass`; an optional first line
/// `# <text>` carries provenance.
pub fn curve_csv(rows: &[CurveRow], comment: Option<&str>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["parameter", "value", "tolerance", "pass"]).expect("csv");
    for r in rows {
        w.write_record([r.parameter.to_string(), r.value.to_string(), opt(&r.tolerance), opt(&r.pass)]).expect("csv");
    }
    let body = String::from_utf8(w.into_inner().expect("csv")).expect("utf8");
    match comment {
        Some(c) => format!("# {}\n{body}", c.replace('\n', " ")),
        None => body,
    }
}
