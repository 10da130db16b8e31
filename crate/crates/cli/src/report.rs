//! JSON report schema and writers.

use anyhow::{Context, Result};
use ddsolve::schedule::ScheduleSummary;
use serde::Serialize;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub matrix: MatrixInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverInfo>,
    pub timings_ms: Timings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bench: Option<Vec<BenchEntry>>,
}

#[derive(Debug, Serialize)]
pub struct MatrixInfo {
    pub name: String,
    pub nrows: usize,
    pub nnz: u64,
}

#[derive(Debug, Serialize)]
pub struct DecompositionInfo {
    #[serde(rename = "P")]
    pub p: usize,
    pub n_subdomains: usize,
    pub nnz_before: u64,
    pub nnz_after: u64,
    pub nnz_dropped: u64,
    pub dropped_fraction: f64,
}

/// Lower/upper factor schedule shapes.
#[derive(Debug, Serialize)]
pub struct ScheduleInfo {
    pub max_levels: usize,
    pub mean_level_width: f64,
    pub lower: ScheduleSummary,
    pub upper: ScheduleSummary,
}

impl ScheduleInfo {
    pub fn new(lower: ScheduleSummary, upper: ScheduleSummary) -> Self {
        ScheduleInfo {
            max_levels: lower.max_levels.max(upper.max_levels),
            mean_level_width: (lower.mean_level_width + upper.mean_level_width) / 2.0,
            lower,
            upper,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SolverInfo {
    pub strategy: String,
    pub preconditioner: String,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakdown_reason: Option<String>,
}

#[derive(Debug, Default, Clone, Copy, Serialize)]
pub struct Timings {
    pub partition: f64,
    pub reorder: f64,
    pub factor: f64,
    pub schedule: f64,
    pub solve: f64,
}

#[derive(Debug, Serialize)]
pub struct BenchEntry {
    pub strategy: String,
    pub reps: usize,
    pub min_ms: f64,
    pub mean_ms: f64,
    pub max_rel_deviation: f64,
}

/// Serializes the report to `path`, or pretty-prints it to stdout when
/// no path was given.
pub fn write_json(report: &Report, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(report).context("serializing report")?;
    match path {
        Some(p) => std::fs::write(p, text.as_bytes())
            .with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

/// Residual history as `iteration,residual` CSV, one row per entry
/// starting at the initial residual (iteration 0).
pub fn write_residual_csv(history: &[f64], path: &Path) -> Result<()> {
    let mut text = String::from("iteration,residual\n");
    for (i, r) in history.iter().enumerate() {
        text.push_str(&format!("{i},{r:e}\n"));
    }
    std::fs::write(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}
