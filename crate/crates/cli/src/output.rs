//! Artifact writing: CSV or JSON data, the manifest, and gnuplot stubs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::CliError;

/// One CSV cell. Reals print with 17 significant digits so that every
/// double round-trips.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Real(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<i64> for Cell {
    fn from(i: i64) -> Self {
        Cell::Int(i)
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

/// Tabular result of a command, plus its JSON rendering.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub json: serde_json::Value,
}

impl Table {
    pub fn new(name: &str, header: Vec<&'static str>, json: impl Serialize) -> Self {
        Table {
            name: name.to_string(),
            header,
            rows: Vec::new(),
            json: serde_json::to_value(json).unwrap_or(serde_json::Value::Null),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

/// Everything a command hands back for writing.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
    /// Series lengths, Fock truncations and precisions actually used.
    pub truncations: BTreeMap<String, serde_json::Value>,
    /// Scalar facts worth recording next to the data.
    pub notes: BTreeMap<String, serde_json::Value>,
    /// Lines echoed to stdout.
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn truncation(&mut self, key: &str, value: impl Serialize) {
        self.truncations
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or_default());
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.notes.insert(key.to_string(), serde_json::to_value(value).unwrap_or_default());
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: &'a RunConfig,
    pub outputs: Vec<String>,
    pub truncations: &'a BTreeMap<String, serde_json::Value>,
    pub notes: &'a BTreeMap<String, serde_json::Value>,
    pub warnings: &'a [String],
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub timestamp: u64,
}

/// Writes the data files, the optional plotting stubs and `manifest.json`
/// into the configured directory. Returns the paths written.
pub fn write_outcome(cfg: &RunConfig, outcome: &Outcome) -> Result<Vec<PathBuf>, CliError> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(io)?;
    let mut written = Vec::new();
    for table in &outcome.tables {
        let (file, bytes) = match cfg.output.format {
            Format::Csv => (format!("{}.csv", table.name), table.csv_bytes()?),
            Format::Json => {
                let mut text = serde_json::to_string_pretty(&table.json).map_err(io)?;
                text.push('\n');
                (format!("{}.json", table.name), text.into_bytes())
            }
        };
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(io)?;
        written.push(path);
        if cfg.output.gnuplot_stub && cfg.output.format == Format::Csv {
            let gp = dir.join(format!("{}.gp", table.name));
            fs::write(&gp, gnuplot_stub(&file, &table.header)).map_err(io)?;
            written.push(gp);
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        outputs: written.iter().map(|p| file_name(p)).collect(),
        truncations: &outcome.truncations,
        notes: &outcome.notes,
        warnings: &outcome.warnings,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(io)?;
    text.push('\n');
    fs::write(&path, text).map_err(io)?;
    written.push(path);
    Ok(written)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// A minimal script plotting every numeric column against the first.
pub fn gnuplot_stub(data_file: &str, header: &[&str]) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str(&format!("set xlabel '{}'\n", header[0]));
    let cols: Vec<String> = (2..=header.len())
        .map(|c| format!("'{data_file}' using 1:{c} with lines"))
        .collect();
    s.push_str(&format!("plot {}\n", cols.join(", \\\n     ")));
    s
}
