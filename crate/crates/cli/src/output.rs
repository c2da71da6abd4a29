//! CSV tables and JSON metadata sidecars.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Missing,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Missing, Into::into)
    }
}

/// Shortest round-trip decimal; scientific below `1e-4` in magnitude.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        "NA".to_string()
    } else if x != 0.0 && x.abs() < 1e-4 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_number(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => "NA".to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the header"
        );
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(&self.columns)?;
        for row in &self.rows {
            writer.write_record(row.iter().map(Cell::render))?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Result of one command before it is written out.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub table: Table,
    /// Points that could not be evaluated.
    pub failures: usize,
    pub summary: serde_json::Map<String, serde_json::Value>,
}

impl Report {
    pub fn new(table: Table) -> Self {
        Self {
            table,
            ..Self::default()
        }
    }

    pub fn with_summary(mut self, key: &str, value: impl Serialize) -> Self {
        self.summary.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    format_version: u32,
    command: &'a str,
    figure: Option<&'a str>,
    columns: &'a [String],
    rows: usize,
    failures: usize,
    summary: &'a serde_json::Map<String, serde_json::Value>,
    config: &'a RunConfig,
}

/// Writes `<name>.csv` and `<name>.meta.json`, or the CSV to stdout when no
/// name is configured. Returns the paths written.
pub fn emit(report: &Report, config: &RunConfig) -> Result<Vec<PathBuf>> {
    let Some(name) = &config.output else {
        report.table.write_csv(std::io::stdout().lock())?;
        return Ok(Vec::new());
    };
    let csv_path = PathBuf::from(format!("{name}.csv"));
    let meta_path = PathBuf::from(format!("{name}.meta.json"));
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = std::fs::File::create(&csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))?;
    report.table.write_csv(std::io::BufWriter::new(file))?;
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        format_version: FORMAT_VERSION,
        command: &config.command,
        figure: config.figure.as_deref(),
        columns: &report.table.columns,
        rows: report.table.rows.len(),
        failures: report.failures,
        summary: &report.summary,
        config,
    };
    let json = serde_json::to_string_pretty(&meta)?;
    std::fs::write(&meta_path, json + "\n")
        .with_context(|| format!("writing {}", meta_path.display()))?;
    Ok(vec![csv_path, meta_path])
}
