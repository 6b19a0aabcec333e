//! Report emission: named columnar tables rendered as machine-readable JSON,
//! aligned human-readable text, and optional per-table CSV files. The report
//! layer only formats; every numeric cell is a library-call result.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io;
use std::path::Path;

pub const REPORT_SCHEMA: u32 = 1;

/// Formats with `sig` significant digits (fixed notation).
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Text(String),
    Num(f64),
    Int(i64),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(x) => fmt_sig(*x, 6),
            Cell::Int(i) => i.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}
impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}
impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
    }
}
impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}
impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render_text(&self) -> String {
        let rendered: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(Cell::render).collect())
            .collect();
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.len()).collect();
        for row in &rendered {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = format!("# {}\n", self.name);
        let header: Vec<String> = self
            .columns
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        out.push_str(&header.join("  "));
        out.push('\n');
        for row in &rendered {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            out.push_str(&line.join("  "));
            out.push('\n');
        }
        out
    }

    fn render_csv(&self) -> String {
        let escape = |s: &str| {
            if s.contains(',') || s.contains('"') || s.contains('\n') {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let mut out = self
            .columns
            .iter()
            .map(|c| escape(c))
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(
                &row.iter()
                    .map(|c| escape(&c.render()))
                    .collect::<Vec<_>>()
                    .join(","),
            );
            out.push('\n');
        }
        out
    }

    fn file_stem(&self) -> String {
        self.name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: u32,
    pub command: String,
    /// SHA-256 of the scenario document, when one was loaded.
    pub scenario_sha256: Option<String>,
    /// Unix seconds; the only field that varies between identical runs.
    pub timestamp: u64,
    pub tables: Vec<Table>,
    pub diagnostics: Vec<String>,
}

impl Report {
    pub fn new(command: &str, scenario_json: Option<&str>) -> Self {
        Report {
            schema: REPORT_SCHEMA,
            command: command.to_string(),
            scenario_sha256: scenario_json.map(|text| {
                let mut h = Sha256::new();
                h.update(text.as_bytes());
                format!("{:x}", h.finalize())
            }),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            tables: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("== {} ==\n", self.command);
        if let Some(sha) = &self.scenario_sha256 {
            out.push_str(&format!("scenario sha256: {sha}\n"));
        }
        for table in &self.tables {
            out.push('\n');
            out.push_str(&table.render_text());
        }
        if !self.diagnostics.is_empty() {
            out.push_str("\ndiagnostics:\n");
            for d in &self.diagnostics {
                out.push_str(&format!("  - {d}\n"));
            }
        }
        out
    }

    /// One CSV file per table under `dir` (created if missing).
    pub fn write_csv(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for table in &self.tables {
            std::fs::write(dir.join(format!("{}.csv", table.file_stem())), table.render_csv())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_figures_formatting() {
        assert_eq!(fmt_sig(0.0565625, 6), "0.0565625");
        assert_eq!(fmt_sig(0.125, 6), "0.125000");
        assert_eq!(fmt_sig(123456789.0, 6), "123456789");
        assert_eq!(fmt_sig(-0.00012345678, 6), "-0.000123457");
        assert_eq!(fmt_sig(f64::INFINITY, 6), "inf");
        assert_eq!(fmt_sig(0.0, 6), "0");
    }

    fn sample_report() -> Report {
        let mut r = Report::new("optimize select", Some("{\"schema\":1}"));
        let mut t = Table::new("per expert", &["expert", "exponent", "policy"]);
        t.push(vec![1usize.into(), 0.1099.into(), "0.5, 0.5".into()]);
        t.push(vec![2usize.into(), 0.1158.into(), "0.2117, 0.7883".into()]);
        r.tables.push(t);
        r.diagnostics.push("all runs converged".to_string());
        r
    }

    #[test]
    fn json_round_trips_and_has_schema() {
        let r = sample_report();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["tables"][0]["rows"][1][1], 0.1158);
        assert!(v["scenario_sha256"].as_str().unwrap().len() == 64);
    }

    #[test]
    fn text_rendering_is_aligned() {
        let text = sample_report().to_text();
        let lines: Vec<&str> = text.lines().filter(|l| l.contains("0.")).collect();
        assert_eq!(lines.len(), 2);
        // right-aligned columns end at the same offset
        assert_eq!(lines[0].len(), lines[1].len());
    }

    #[test]
    fn csv_files_are_written() {
        let dir = std::env::temp_dir().join(format!("exponentlab-csv-{}", std::process::id()));
        let r = sample_report();
        r.write_csv(&dir).unwrap();
        let body = std::fs::read_to_string(dir.join("per_expert.csv")).unwrap();
        assert!(body.starts_with("expert,exponent,policy\n"));
        assert!(body.contains("\"0.2117, 0.7883\""));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
