//! Tabular output: `#` header lines, a column header, then rows. JSON holds the
//! same content.

use std::io::{self, Write};

use serde_json::{json, Value};

/// Token written for points excluded by a threshold or with no finite value.
pub const DIVERGENT: &str = "divergent";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Divergent,
}

impl Cell {
    pub fn num(v: f64) -> Self {
        if v.is_finite() {
            Self::Num(v)
        } else {
            Self::Divergent
        }
    }

    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Self::Divergent, Self::num)
    }

    pub fn csv_string(&self) -> String {
        match self {
            Self::Num(v) => format_number(*v),
            Self::Int(v) => v.to_string(),
            Self::Divergent => DIVERGENT.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Self::Num(v) => json!(v),
            Self::Int(v) => json!(v),
            Self::Divergent => Value::Null,
        }
    }
}

/// Plain decimal in a readable range, exponent notation outside it. Both are
/// shortest round-trip representations, so output is reproducible.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if (1e-4..1e6).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), ..Self::default() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn meta_num(&mut self, key: &str, value: f64) {
        self.meta(key, Cell::num(value).csv_string());
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, out: &mut W, format: Format) -> io::Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => {
                serde_json::to_writer_pretty(&mut *out, &self.to_json())?;
                writeln!(out)
            }
        }
    }

    fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for (k, v) in &self.header {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv_string).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let header: Vec<Value> = self.header.iter().map(|(k, v)| json!([k, v])).collect();
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        json!({ "header": header, "columns": self.columns, "rows": rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(&["gamma", "nu_eff_ratio"]);
        t.meta("seed", 0);
        t.push(vec![Cell::num(0.5), Cell::num(0.8)]);
        t.push(vec![Cell::num(1.0), Cell::Divergent]);
        t
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        sample().write(&mut buf, Format::Csv).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# seed: 0\ngamma,nu_eff_ratio\n0.5,0.8\n1,divergent\n");
    }

    #[test]
    fn json_mirrors_csv() {
        let v = sample().to_json();
        assert_eq!(v["header"][0], json!(["seed", "0"]));
        assert_eq!(v["rows"][1], json!([1.0, null]));
        assert_eq!(v["columns"], json!(["gamma", "nu_eff_ratio"]));
    }

    #[test]
    fn number_format() {
        assert_eq!(format_number(1e-7), "1e-7");
        assert_eq!(format_number(0.25), "0.25");
        assert_eq!(format_number(-3e8), "-3e8");
        assert_eq!(Cell::num(f64::INFINITY), Cell::Divergent);
    }
}
