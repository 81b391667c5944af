//! Tables rendered as CSV or as a JSON record with config echo.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            // Non-finite values have no JSON number form.
            Cell::Num(v) if !v.is_finite() => Value::String(v.to_string()),
            Cell::Num(v) => json!(v),
            Cell::Int(v) => json!(v),
            Cell::Bool(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }
}

/// 17 significant digits, round-trip safe.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Fixed header plus rows; `extra` carries JSON-only detail.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
    pub extra: Map<String, Value>,
}

impl Table {
    pub fn new(header: &'static [&'static str]) -> Self {
        Self { header, rows: Vec::new(), extra: Map::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn to_json(&self, command: &str, version: &str, seed: u64, config: Value) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| Value::Object(self.header.iter().zip(row).map(|(k, c)| (k.to_string(), c.json())).collect()))
            .collect();
        let mut doc = json!({
            "command": command,
            "version": version,
            "seed": seed,
            "config": config,
            "columns": self.header,
            "rows": rows,
        });
        if !self.extra.is_empty() {
            doc["extra"] = Value::Object(self.extra.clone());
        }
        let mut s = serde_json::to_string_pretty(&doc).expect("JSON values always serialize");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_17_digits() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn csv_quotes_text_when_needed() {
        let mut t = Table::new(&["id", "detail"]);
        t.push(vec![Cell::Int(1), Cell::Text("a, \"b\"".into())]);
        assert_eq!(t.to_csv(), "id,detail\n1,\"a, \"\"b\"\"\"\n");
    }

    #[test]
    fn json_rows_are_keyed_by_column() {
        let mut t = Table::new(&["x", "ok"]);
        t.push(vec![Cell::Num(0.5), Cell::Bool(true)]);
        let v: Value = serde_json::from_str(&t.to_json("kernel", "v0", 3, json!({}))).unwrap();
        assert_eq!(v["rows"][0]["x"], json!(0.5));
        assert_eq!(v["seed"], json!(3));
        assert_eq!(v["version"], json!("v0"));
    }
}
