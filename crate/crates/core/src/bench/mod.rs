//! Benchmark harness: canonical workflow patterns, paired runs of both
//! execution modes, and CSV/text/SVG reports.

mod patterns;
mod report;
mod runner;

use std::path::Path;

pub use patterns::{
    build_pattern, regions_for_payload, BenchmarkSpec, Pattern, BENCH_DENSITY, BENCH_GENES, BENCH_MINING,
};
pub use report::{csv_rows, emit_report, read_csv, speedup_svg, summary_table, CsvRow};
pub use runner::{median, run_benchmark, run_benchmark_on, BenchmarkResult, ModeResult};

use crate::orchestrator::EngineError;
use crate::transport::TransportError;
use crate::workflow::WorkflowError;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid benchmark spec: {0}")]
    InvalidSpec(String),
    #[error("{pattern} needs {need} sites, topology has {have}")]
    TooFewSites { pattern: Pattern, need: usize, have: usize },
    #[error("modes disagree on sink {sink}: pure {pure}, circulate {circulate}")]
    EquivalenceViolation { sink: String, pure: String, circulate: String },
    #[error("byte counters differ between repetitions: {0}")]
    CounterDrift(String),
    #[error("no results to report")]
    EmptyResults,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("suite config: {0}")]
    Config(String),
}

/// Reads a suite file: a JSON list of [`BenchmarkSpec`]s. Relative
/// topology paths are resolved against the file's directory.
pub fn load_suite(path: &Path) -> Result<Vec<BenchmarkSpec>, BenchError> {
    let text = std::fs::read_to_string(path)?;
    let mut specs: Vec<BenchmarkSpec> =
        serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for s in &mut specs {
        if s.topology_file.is_relative() {
            s.topology_file = base.join(&s.topology_file);
        }
        s.validate()?;
    }
    Ok(specs)
}
