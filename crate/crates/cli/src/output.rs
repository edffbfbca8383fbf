//! Tabular results written as CSV (one header row, LF endings, floats at 17
//! significant digits) or as JSON mirroring the same columns.

use std::io::Write;

use serde_json::{json, Value as Json};

use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl Cell {
    /// CSV rendering: `{:.16e}` for floats, so every value carries 17 significant digits.
    pub fn render(&self) -> String {
        match self {
            Cell::Float(v) if v.is_nan() => "NaN".to_string(),
            Cell::Float(v) if v.is_infinite() => if *v > 0.0 { "inf" } else { "-inf" }.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn to_json(&self) -> Json {
        match self {
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(_) | Cell::Missing => Json::Null,
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Float(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
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

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Missing, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: Table) {
        assert_eq!(self.columns, other.columns, "tables must share a header");
        self.rows.extend(other.rows);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cells of column `name` (panics if absent; intended for tests and summaries).
    pub fn values(&self, name: &str) -> Vec<&Cell> {
        let j = self.column(name).unwrap_or_else(|| panic!("no column '{name}'"));
        self.rows.iter().map(|r| &r[j]).collect()
    }

    pub fn write<W: Write>(&self, out: W, format: Format) -> CliResult<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => self.write_json(out),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> CliResult<()> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        writer.write_record(&self.columns)?;
        for row in &self.rows {
            writer.write_record(row.iter().map(Cell::render))?;
        }
        writer.flush()?;
        Ok(())
    }

    /// `{"columns": [...], "rows": [[...], ...]}` with non-finite floats as `null`.
    pub fn write_json<W: Write>(&self, mut out: W) -> CliResult<()> {
        let rows: Vec<Json> = self.rows.iter().map(|r| Json::Array(r.iter().map(Cell::to_json).collect())).collect();
        serde_json::to_writer_pretty(&mut out, &json!({ "columns": self.columns, "rows": rows }))?;
        writeln!(out)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> CliResult<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_seventeen_digits() {
        assert_eq!(Cell::Float(0.1).render(), "1.0000000000000001e-1");
        assert_eq!(Cell::Float(-2.0).render(), "-2.0000000000000000e0");
        assert_eq!("1.0000000000000001e-1".parse::<f64>().unwrap(), 0.1);
        assert_eq!(Cell::Missing.render(), "");
    }

    #[test]
    fn csv_has_lf_endings_and_header() {
        let mut table = Table::new(&["a", "b"]);
        table.push(vec![Cell::Int(1), "x,y".into()]);
        assert_eq!(table.to_csv_string().unwrap(), "a,b\n1,\"x,y\"\n");
    }

    #[test]
    fn json_mirrors_columns() {
        let mut table = Table::new(&["v"]);
        table.push(vec![Cell::Float(f64::NAN)]);
        let mut buf = Vec::new();
        table.write_json(&mut buf).unwrap();
        let parsed: Json = serde_json::from_slice(&buf).unwrap();
        assert_eq!(parsed["columns"][0], "v");
        assert!(parsed["rows"][0][0].is_null());
    }
}
