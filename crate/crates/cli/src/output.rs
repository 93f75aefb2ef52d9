use std::fmt::Write as _;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use rcm_core::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => json!(float(*v)),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }
}

/// 17 significant digits, so every value round-trips.
pub fn float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Self {
            name,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Everything a subcommand produces: scalar results plus long-format tables.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub summary: Vec<(&'static str, Cell)>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn scalar(&mut self, key: &'static str, value: impl Into<Cell>) {
        self.summary.push((key, value.into()));
    }
}

pub struct Header {
    pub command: &'static str,
    pub model_hash: String,
    pub seed: u64,
    pub config: Map<String, Value>,
}

/// SHA-256 of the canonical JSON of the model specs.
pub fn model_hash(specs: &[ModelSpec]) -> String {
    let text = serde_json::to_string(specs).expect("model specs serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn render(header: &Header, report: &Report, format: Format) -> String {
    let version = env!("CARGO_PKG_VERSION");
    let config = Value::Object(header.config.clone()).to_string();
    match format {
        Format::Csv => {
            let mut out = String::new();
            writeln!(out, "# rcm {version}").unwrap();
            writeln!(out, "# command: {}", header.command).unwrap();
            writeln!(out, "# model_sha256: {}", header.model_hash).unwrap();
            writeln!(out, "# seed: {}", header.seed).unwrap();
            writeln!(out, "# config: {config}").unwrap();
            for (k, v) in &report.summary {
                writeln!(out, "# {k}: {}", v.csv()).unwrap();
            }
            for table in &report.tables {
                if report.tables.len() > 1 {
                    writeln!(out, "# table: {}", table.name).unwrap();
                }
                writeln!(out, "{}", table.columns.join(",")).unwrap();
                for row in &table.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    writeln!(out, "{}", cells.join(",")).unwrap();
                }
            }
            out
        }
        Format::Json => {
            let summary: Map<String, Value> =
                report.summary.iter().map(|(k, v)| (k.to_string(), v.json())).collect();
            let tables: Map<String, Value> = report
                .tables
                .iter()
                .map(|t| {
                    let rows: Vec<Value> = t
                        .rows
                        .iter()
                        .map(|r| {
                            Value::Object(
                                t.columns.iter().zip(r).map(|(c, v)| (c.to_string(), v.json())).collect(),
                            )
                        })
                        .collect();
                    (t.name.to_string(), Value::Array(rows))
                })
                .collect();
            let doc = json!({
                "header": {
                    "version": version,
                    "command": header.command,
                    "model_sha256": header.model_hash,
                    "seed": header.seed,
                    "config": header.config,
                },
                "summary": summary,
                "tables": tables,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
            s.push('\n');
            s
        }
    }
}
