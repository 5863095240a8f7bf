use std::fs;
use std::io::Write;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::args::{Format, OutputArgs};

/// Carried by every JSON document; `report` refuses to merge documents
/// whose version differs from its own.
pub const SPEC_VERSION: &str = "1";

/// Flat table used for CSV output and the terminal summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(String::from_utf8(w.into_inner().context("flushing CSV")?)?)
    }

    /// Space-aligned text rendering.
    pub fn render(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = line(&self.headers);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Short fixed-precision rendering for terminal tables.
pub fn short(v: f64) -> String {
    if v.is_finite() && v.abs() >= 1e-3 && v.abs() < 1e7 {
        format!("{v:.4}")
    } else {
        format!("{v:.4e}")
    }
}

pub fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

/// Writes the document in the requested format to `--out` or standard
/// output. With `--out`, the terminal table also goes to standard output.
pub fn emit<T: Serialize>(args: &OutputArgs, doc: &T, table: &Table, terminal: &Table) -> Result<()> {
    let body = match args.format {
        Format::Json => to_json(doc)?,
        Format::Csv => table.to_csv()?,
    };
    match &args.out {
        Some(path) => {
            fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?;
            print!("{}", terminal.render());
        }
        None => std::io::stdout().lock().write_all(body.as_bytes())?,
    }
    Ok(())
}
