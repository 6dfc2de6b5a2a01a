//! Tabular results and their CSV/JSON encodings.

use serde_json::{json, Value};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    /// Reals use 17 significant digits so that they re-parse exactly.
    fn csv(&self) -> String {
        match self {
            Cell::Real(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Real(v) if v.is_nan() => "nan".into(),
            Cell::Real(v) => if *v > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    /// Non-finite reals become `null`.
    fn json(&self) -> Value {
        match self {
            Cell::Real(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// CSV with a `#` header holding the resolved config, tool version and seed.
pub fn to_csv(table: &Table, config: &ExperimentConfig) -> String {
    let config_json = serde_json::to_string(config).expect("config serializes");
    let mut out = format!("# xcov {VERSION}\n# seed: {}\n# config: {config_json}\n", config.seed);
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(Cell::csv).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn to_json(table: &Table, config: &ExperimentConfig) -> String {
    let rows: Vec<Value> = table.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
    let doc = json!({
        "version": VERSION,
        "seed": config.seed,
        "config": config,
        "columns": table.columns,
        "rows": rows,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("table serializes");
    text.push('\n');
    text
}

/// Resolved config embedded in an emitted CSV header.
pub fn config_from_csv(text: &str) -> Option<&str> {
    text.lines().find_map(|l| l.strip_prefix("# config: "))
}
