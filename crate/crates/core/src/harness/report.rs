//! Report types and CSV/JSON emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::Settings;
use crate::stats::{aggregate_seeds, SeedAggregate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::config(
                "format",
                format!("unknown format `{other}` (expected csv or json)"),
            )),
        }
    }
}

/// Metric name to value; `None` marks a value that does not exist for this
/// seed (for example an empty correctness class).
pub type Metrics = BTreeMap<String, Option<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub metrics: Metrics,
    /// Set when the seed could not complete (training divergence).
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Run provenance. Excluded from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub generated_at_unix: u64,
    pub host: String,
    pub version: String,
}

impl Metadata {
    pub fn now() -> Self {
        let generated_at_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let host = std::env::var("HOSTNAME")
            .ok()
            .or_else(|| fs::read_to_string("/etc/hostname").ok())
            .map(|h| h.trim().to_string())
            .unwrap_or_default();
        Metadata {
            generated_at_unix,
            host,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment_id: String,
    /// The claim this experiment probes, in words.
    pub claim: String,
    pub config_echo: Settings,
    pub per_seed: Vec<SeedMetrics>,
    pub aggregates: BTreeMap<String, SeedAggregate>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub notes: Vec<String>,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
    pub metadata: Metadata,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub documents: Vec<(String, serde_json::Value)>,
}

impl ExperimentReport {
    /// Pretty JSON with the metadata block removed; byte-identical across
    /// re-runs of the same configuration.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self).map_err(|e| Error::Consistency(e.to_string()))?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("metadata");
        }
        serde_json::to_string_pretty(&value).map_err(|e| Error::Consistency(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Consistency(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Consistency(format!("bad report JSON: {e}")))
    }

    /// Names of the files [`emit_report`] writes for `formats`.
    pub fn artifact_names(&self, formats: &[Format]) -> Vec<String> {
        let id = &self.experiment_id;
        let mut names = Vec::new();
        if formats.contains(&Format::Json) {
            names.push(format!("{id}.json"));
            names.extend(self.documents.iter().map(|(n, _)| format!("{id}_{n}.json")));
        }
        if formats.contains(&Format::Csv) {
            names.push(format!("{id}_per_seed.csv"));
            names.extend(self.tables.iter().map(|t| format!("{id}_{}.csv", t.name)));
        }
        names
    }

    /// One row per seed: `seed`, every metric name in sorted order, `error`.
    pub fn per_seed_table(&self) -> Table {
        let keys: std::collections::BTreeSet<&String> = self.per_seed.iter().flat_map(|s| s.metrics.keys()).collect();
        let mut columns = vec!["seed".to_string()];
        columns.extend(keys.iter().map(|k| k.to_string()));
        columns.push("error".into());
        let rows = self
            .per_seed
            .iter()
            .map(|s| {
                let mut row = vec![Cell::Int(s.seed)];
                row.extend(keys.iter().map(|k| Cell::from(s.metrics.get(*k).copied().flatten())));
                row.push(s.error.clone().map_or(Cell::Empty, Cell::Text));
                row
            })
            .collect();
        Table {
            name: "per_seed".into(),
            columns,
            rows,
        }
    }
}

/// Aggregates every metric over the seeds where it is present.
pub fn aggregate_metrics(per_seed: &[SeedMetrics]) -> BTreeMap<String, SeedAggregate> {
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in per_seed {
        for (k, v) in &s.metrics {
            if let Some(v) = v {
                values.entry(k.clone()).or_default().push(*v);
            }
        }
    }
    values
        .into_iter()
        .filter_map(|(k, v)| aggregate_seeds(&v).ok().map(|a| (k, a)))
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Consistency(format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(&table.columns).map_err(io_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render)).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the report's artifacts into `out_dir` and returns their paths, in
/// the order of [`ExperimentReport::artifact_names`].
pub fn emit_report(report: &ExperimentReport, out_dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let id = &report.experiment_id;
    let mut paths = Vec::new();
    if formats.contains(&Format::Json) {
        let path = out_dir.join(format!("{id}.json"));
        write_file(&path, report.to_json()?.as_bytes())?;
        paths.push(path);
        for (name, doc) in &report.documents {
            let path = out_dir.join(format!("{id}_{name}.json"));
            let text = serde_json::to_string_pretty(doc).map_err(|e| Error::Consistency(e.to_string()))?;
            write_file(&path, text.as_bytes())?;
            paths.push(path);
        }
    }
    if formats.contains(&Format::Csv) {
        let path = out_dir.join(format!("{id}_per_seed.csv"));
        write_csv(&path, &report.per_seed_table())?;
        paths.push(path);
        for table in &report.tables {
            let path = out_dir.join(format!("{id}_{}.csv", table.name));
            write_csv(&path, table)?;
            paths.push(path);
        }
    }
    Ok(paths)
}
