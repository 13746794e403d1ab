//! Report files: one pretty JSON summary plus CSV tables per command.

use std::path::Path;

use serde::Serialize;
use vh_core::{atomic, czo, filterbank};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// A CSV table with a fixed column order.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: Vec<&'static str>) -> Self {
        Self { name: name.into(), header, rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(&self.name);
        let err = |source| CliError::Table { path: path.clone(), source };
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path).map_err(err)?;
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|source| CliError::Write { path: path.clone(), source })
    }
}

/// Shortest round-trip text of a float; `nan`/`inf` spelled out.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        format!("{v}").to_lowercase()
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Fixed thresholds compiled into the core, echoed in every report.
#[derive(Clone, Debug, Serialize)]
pub struct FixedTolerances {
    pub partition: f64,
    pub atom_norm: f64,
    pub atom_moment: f64,
    pub pairing: f64,
    pub route: f64,
    pub route_floor: f64,
    pub dilation_threshold: f64,
    pub support_dilation: f64,
}

impl FixedTolerances {
    pub fn current() -> Self {
        Self {
            partition: filterbank::PARTITION_TOL,
            atom_norm: atomic::ATOM_NORM_TOL,
            atom_moment: atomic::ATOM_MOMENT_TOL,
            pairing: czo::PAIRING_TOL,
            route: czo::ROUTE_TOL,
            route_floor: czo::ROUTE_FLOOR,
            dilation_threshold: atomic::DILATION_THRESHOLD,
            support_dilation: atomic::SUPPORT_DILATION,
        }
    }
}

/// Common head of every JSON report.
#[derive(Clone, Debug, Serialize)]
pub struct Header {
    pub command: &'static str,
    pub version: &'static str,
    pub config_hash: String,
    pub config: RunConfig,
    pub fixed_tolerances: FixedTolerances,
}

impl Header {
    pub fn new(command: &'static str, config: &RunConfig, hash: &str) -> Self {
        let mut config = config.clone();
        config.output_dir = None;
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: hash.to_string(),
            config,
            fixed_tolerances: FixedTolerances::current(),
        }
    }
}

/// What a command produced.
#[derive(Clone, Debug)]
pub struct CommandOutput {
    pub name: &'static str,
    pub report: serde_json::Value,
    pub tables: Vec<Table>,
    pub pass: bool,
}

impl CommandOutput {
    pub fn new(name: &'static str, report: &impl Serialize, tables: Vec<Table>, pass: bool) -> CliResult<Self> {
        Ok(Self { name, report: serde_json::to_value(report)?, tables, pass })
    }

    /// Writes `<name>.json` and the tables into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let werr = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Write { path, source }
        };
        std::fs::create_dir_all(dir).map_err(werr(dir))?;
        let path = dir.join(format!("{}.json", self.name));
        let mut text = serde_json::to_string_pretty(&self.report)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(werr(&path))?;
        for t in &self.tables {
            t.write(dir)?;
        }
        Ok(())
    }
}
