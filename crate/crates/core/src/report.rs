//! Deterministic report files.
//!
//! `{experiment}_{hash}.json` and `.csv` depend only on the config and seed.
//! Wall-clock data goes to `.timing.json` and solver logs to `.solves.jsonl`,
//! which the JSON report references by name.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimates::EstimateReport;
use crate::solver::SolveStats;

/// Version string embedded in every report.
pub const VERSION: &str = env!("GREENLAB_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Warn,
    InvariantFailure,
    SolverFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass | Status::Warn => 0,
            Status::InvariantFailure => 1,
            Status::SolverFailure => 3,
        }
    }
}

/// Extra columns of the sweep table, each as long as the sweep axis.
pub type Columns = Vec<(String, Vec<f64>)>;

#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub seed: u64,
    pub columns: Columns,
    pub warnings: Vec<String>,
    pub failures: Vec<String>,
    pub solver_failures: Vec<String>,
    pub notes: Vec<String>,
    pub solves: Vec<(String, SolveStats)>,
    pub wall_time: f64,
}

impl RunLog {
    pub fn status(&self) -> Status {
        if !self.solver_failures.is_empty() {
            Status::SolverFailure
        } else if !self.failures.is_empty() {
            Status::InvariantFailure
        } else if !self.warnings.is_empty() {
            Status::Warn
        } else {
            Status::Pass
        }
    }

    pub fn solve(&mut self, label: impl Into<String>, stats: &SolveStats) {
        self.solves.push((label.into(), stats.clone()));
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub timing: PathBuf,
    pub solves: PathBuf,
}

#[derive(Serialize)]
struct Document<'a> {
    name: &'a str,
    version: &'a str,
    config_hash: &'a str,
    seed: u64,
    status: Status,
    metrics: &'a std::collections::BTreeMap<String, f64>,
    sweep_axis: Option<&'a (String, Vec<f64>)>,
    warnings: &'a [String],
    failures: Vec<&'a String>,
    notes: &'a [String],
    provenance: &'a [String],
    timing_file: String,
    solves_file: String,
}

#[derive(Serialize)]
struct Timing<'a> {
    version: &'a str,
    config_hash: &'a str,
    wall_time_seconds: f64,
    solves: usize,
    solve_wall_time_seconds: f64,
}

#[derive(Serialize)]
struct SolveLine<'a> {
    label: &'a str,
    #[serde(flatten)]
    stats: &'a SolveStats,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn put(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Shortest round-trip representation; identical bits give identical text.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn csv_text(report: &EstimateReport, columns: &Columns) -> Result<String> {
    let mut out = String::new();
    match &report.sweep_axis {
        Some((axis, values)) => {
            for (name, col) in columns {
                if col.len() != values.len() {
                    return Err(Error::Invariant(format!(
                        "column {name} has {} rows, sweep axis has {}",
                        col.len(),
                        values.len()
                    )));
                }
            }
            let header: Vec<&str> = std::iter::once(axis.as_str()).chain(columns.iter().map(|(n, _)| n.as_str())).collect();
            out.push_str(&header.join(","));
            out.push('\n');
            for (i, v) in values.iter().enumerate() {
                let row: Vec<String> = std::iter::once(fmt_f64(*v)).chain(columns.iter().map(|(_, c)| fmt_f64(c[i]))).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        None => {
            out.push_str("metric,value\n");
            for (k, v) in &report.metrics {
                out.push_str(&format!("{k},{}\n", fmt_f64(*v)));
            }
        }
    }
    Ok(out)
}

/// Writes the four report files into `dir` (created if missing).
pub fn emit_report(report: &EstimateReport, log: &RunLog, dir: &Path) -> Result<ReportPaths> {
    if let Some((k, v)) = report.metrics.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Invariant(format!("metric {k} is not finite ({v})")));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let short = &report.config_hash[..report.config_hash.len().min(16)];
    let stem = format!("{}_{}", report.name, short);
    let paths = ReportPaths {
        json: dir.join(format!("{stem}.json")),
        csv: dir.join(format!("{stem}.csv")),
        timing: dir.join(format!("{stem}.timing.json")),
        solves: dir.join(format!("{stem}.solves.jsonl")),
    };
    let csv = csv_text(report, &log.columns)?;
    let failures = log.solver_failures.iter().chain(&log.failures).collect();
    let doc = Document {
        name: &report.name,
        version: VERSION,
        config_hash: &report.config_hash,
        seed: log.seed,
        status: log.status(),
        metrics: &report.metrics,
        sweep_axis: report.sweep_axis.as_ref(),
        warnings: &log.warnings,
        failures,
        notes: &log.notes,
        provenance: &report.provenance,
        timing_file: file_name(&paths.timing),
        solves_file: file_name(&paths.solves),
    };
    let mut json = serde_json::to_string_pretty(&doc).map_err(|e| Error::Serde(e.to_string()))?;
    json.push('\n');
    put(&paths.json, json.as_bytes())?;
    put(&paths.csv, csv.as_bytes())?;
    let timing = Timing {
        version: VERSION,
        config_hash: &report.config_hash,
        wall_time_seconds: log.wall_time,
        solves: log.solves.len(),
        solve_wall_time_seconds: log.solves.iter().map(|(_, s)| s.wall_time).sum(),
    };
    let mut t = serde_json::to_string_pretty(&timing).map_err(|e| Error::Serde(e.to_string()))?;
    t.push('\n');
    put(&paths.timing, t.as_bytes())?;
    let mut lines = String::new();
    for (label, stats) in &log.solves {
        lines.push_str(&serde_json::to_string(&SolveLine { label, stats }).map_err(|e| Error::Serde(e.to_string()))?);
        lines.push('\n');
    }
    put(&paths.solves, lines.as_bytes())?;
    Ok(paths)
}
