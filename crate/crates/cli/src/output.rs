//! Tabular results written as CSV, mirrored in a JSON envelope.

use serde::Serialize;
use serde_json::{Map, Value};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Column-major description with row-major values; every cell is a JSON scalar.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
    /// Extra results that do not fit the rows (fitted slopes, pass counts, …).
    pub summary: Map<String, Value>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), ..Self::default() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row.iter().map(cell))?;
        }
        out.flush()?;
        Ok(())
    }

    fn json_rows(&self) -> Vec<Value> {
        self.rows.iter().map(|r| Value::Object(self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect())).collect()
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// `f64` cell; non-finite values become `null` in JSON and empty in CSV.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

#[derive(Debug, Serialize)]
pub struct Envelope<'a> {
    pub command: &'a str,
    pub build: &'a str,
    pub seed: u64,
    pub inputs: &'a Value,
    pub columns: &'a [&'static str],
    pub rows: Vec<Value>,
    pub summary: &'a Map<String, Value>,
    pub wall_time_seconds: f64,
}

/// Writes `path` (CSV) and the envelope next to it; returns the envelope's path.
pub fn write_files(path: &Path, table: &Table, envelope: &Value) -> std::io::Result<PathBuf> {
    let file = std::fs::File::create(path)?;
    table.write_csv(std::io::BufWriter::new(file)).map_err(std::io::Error::other)?;
    let json_path = envelope_path(path);
    std::fs::write(&json_path, serde_json::to_string_pretty(envelope)? + "\n")?;
    Ok(json_path)
}

pub fn envelope_rows(table: &Table) -> Vec<Value> {
    table.json_rows()
}

/// `out.csv` pairs with `out.json`; an output that is itself `.json` pairs with `.envelope.json`.
pub fn envelope_path(csv: &Path) -> PathBuf {
    if csv.extension().is_some_and(|e| e == "json") {
        csv.with_extension("envelope.json")
    } else {
        csv.with_extension("json")
    }
}
