//! Experiment reports and their CSV/JSON serialization.
//!
//! CSV floats carry 17 significant digits (`{:.16e}`); JSON floats use the
//! shortest representation that parses back to the same `f64`. Wall-clock
//! time is kept out of both files so identical configs give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{Config, Format};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format_float(*x),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Float(x) => json_float(*x),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<Option<bool>> for Cell {
    fn from(x: Option<bool>) -> Self {
        x.map_or(Cell::Empty, Cell::Bool)
    }
}

/// 17 significant digits; non-finite values spelled out.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

/// JSON has no non-finite numbers: those become strings.
pub fn json_float(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(format_float(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub pass: bool,
    pub max_deviation: f64,
    pub runtime_ms: u128,
    /// Human-readable reasons for a failed property.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_echo: Value,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Summary,
    /// Experiment-level results beyond the per-row table.
    pub fields: Map<String, Value>,
    pub tool_version: String,
    pub config_hash: String,
}

/// SHA-256 of the canonical config JSON.
pub fn config_hash(cfg: &Config) -> String {
    let bytes = serde_json::to_vec(&cfg.echo()).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentReport {
    pub fn exit_code(&self) -> i32 {
        if self.summary.pass {
            0
        } else {
            1
        }
    }

    fn rows_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let mut m = Map::new();
                    for (c, v) in self.columns.iter().zip(r) {
                        m.insert((*c).to_string(), v.json());
                    }
                    Value::Object(m)
                })
                .collect(),
        )
    }

    /// The JSON document; `with_rows = false` gives the CSV sidecar.
    pub fn to_json(&self, with_rows: bool) -> Value {
        let mut doc = Map::new();
        doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
        doc.insert("experiment".into(), json!(self.experiment));
        doc.insert("config_echo".into(), self.config_echo.clone());
        doc.insert("columns".into(), json!(self.columns));
        if with_rows {
            doc.insert("rows".into(), self.rows_json());
        }
        doc.insert(
            "summary".into(),
            json!({
                "pass": self.summary.pass,
                "max_deviation": json_float(self.summary.max_deviation),
                "failures": self.summary.failures,
            }),
        );
        doc.insert("fields".into(), Value::Object(self.fields.clone()));
        doc.insert(
            "provenance".into(),
            json!({ "tool_version": self.tool_version, "config_sha256": self.config_hash }),
        );
        Value::Object(doc)
    }

    pub fn to_csv(&self) -> std::io::Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::csv))?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }

    /// Writes the report under `dir`; returns the paths written.
    pub fn emit(&self, dir: &Path, format: Format) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        match format {
            Format::Json => {
                let p = dir.join(format!("{}.json", self.experiment));
                fs::write(&p, pretty(&self.to_json(true)))?;
                written.push(p);
            }
            Format::Csv => {
                let p = dir.join(format!("{}.csv", self.experiment));
                fs::write(&p, self.to_csv()?)?;
                written.push(p);
                let s = dir.join(format!("{}.summary.json", self.experiment));
                fs::write(&s, pretty(&self.to_json(false)))?;
                written.push(s);
            }
        }
        Ok(written)
    }
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("report serializes");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> ExperimentReport {
        ExperimentReport {
            experiment: "profile".into(),
            config_echo: json!({"a": 1}),
            columns: vec!["v_index", "h", "ok", "note"],
            rows: vec![
                vec![Cell::Int(0), Cell::Float(0.1 + 0.2), Cell::Bool(true), Cell::Text("a,b".into())],
                vec![Cell::Int(1), Cell::Float(f64::NAN), Cell::Empty, Cell::Text(String::new())],
            ],
            summary: Summary { pass: true, max_deviation: 1.0 / 3.0, runtime_ms: 12, failures: vec![] },
            fields: Map::new(),
            tool_version: "0.1.0".into(),
            config_hash: "00".into(),
        }
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1 + 0.2, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(format_float(2.0), "2.0000000000000000e0");
    }

    #[test]
    fn csv_layout() {
        let text = String::from_utf8(report().to_csv().unwrap()).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], "v_index,h,ok,note");
        assert_eq!(lines[1], "0,3.0000000000000004e-1,true,\"a,b\"");
        assert_eq!(lines[2], "1,NaN,,");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let r = report();
        let bytes = pretty(&r.to_json(true));
        let back: Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back["rows"][0]["h"].as_f64().unwrap(), 0.1 + 0.2);
        assert_eq!(back["summary"]["max_deviation"].as_f64().unwrap(), 1.0 / 3.0);
        assert_eq!(back["rows"][1]["h"], json!("NaN"));
        assert_eq!(back["schema_version"], json!(SCHEMA_VERSION));
        assert!(back["summary"].get("runtime_ms").is_none());
    }

    #[test]
    fn emit_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let r = report();
        let a = r.emit(&dir.path().join("a"), Format::Csv).unwrap();
        let b = r.emit(&dir.path().join("b"), Format::Csv).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }
}
