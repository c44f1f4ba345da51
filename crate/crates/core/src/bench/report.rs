use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::patterns::Pattern;
use super::runner::BenchmarkResult;
use super::BenchError;
use crate::workflow::ExecutionMode;

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub pattern: Pattern,
    pub n: usize,
    pub payload_mb: f64,
    pub mode: ExecutionMode,
    pub makespan_s: f64,
    pub engine_payload_bytes: u64,
    pub p2p_payload_bytes: u64,
    pub speedup: f64,
}

pub fn csv_rows(results: &[BenchmarkResult]) -> Vec<CsvRow> {
    results
        .iter()
        .flat_map(|r| {
            ExecutionMode::ALL.into_iter().map(move |mode| {
                let m = r.mode(mode);
                CsvRow {
                    pattern: r.spec.pattern,
                    n: r.spec.n,
                    payload_mb: r.spec.payload_mb,
                    mode,
                    makespan_s: m.makespan_s,
                    engine_payload_bytes: m.engine_payload_bytes,
                    p2p_payload_bytes: m.p2p_payload_bytes,
                    speedup: r.speedup,
                }
            })
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>, BenchError> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

pub fn summary_table(results: &[BenchmarkResult]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<14} {:>3} {:>10} {:>10} {:>12} {:>15} {:>15} {:>8}",
        "pattern", "n", "payload_mb", "pure_s", "circulate_s", "pure_engine_B", "circ_engine_B", "speedup"
    )
    .unwrap();
    for r in results {
        writeln!(
            out,
            "{:<14} {:>3} {:>10} {:>10.3} {:>12.3} {:>15} {:>15} {:>7.2}x",
            r.spec.pattern.as_str(),
            r.spec.n,
            r.spec.payload_mb,
            r.pure.makespan_s,
            r.circulate.makespan_s,
            r.pure.engine_payload_bytes,
            r.circulate.engine_payload_bytes,
            r.speedup
        )
        .unwrap();
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart of speedup per benchmark, with a dashed line at 1x.
pub fn speedup_svg(results: &[BenchmarkResult]) -> String {
    const BAR: f64 = 36.0;
    const GAP: f64 = 24.0;
    const LEFT: f64 = 60.0;
    const TOP: f64 = 30.0;
    const PLOT_H: f64 = 240.0;
    const BOTTOM: f64 = 110.0;

    let max = results.iter().map(|r| r.speedup).fold(1.0_f64, f64::max).ceil();
    let width = LEFT + GAP + results.len() as f64 * (BAR + GAP);
    let height = TOP + PLOT_H + BOTTOM;
    let y = |v: f64| TOP + PLOT_H * (1.0 - v / max);
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(svg, r#"<text x="{LEFT}" y="18" font-size="13">speedup (pure / circulate makespan)</text>"#).unwrap();
    writeln!(svg, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, TOP + PLOT_H).unwrap();
    writeln!(svg, r#"<line x1="{LEFT}" y1="{0}" x2="{width}" y2="{0}" stroke="black"/>"#, TOP + PLOT_H).unwrap();
    for tick in 0..=(max as u32) {
        let ty = y(tick as f64);
        writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{tick}x</text>"#, LEFT - 6.0, ty + 4.0).unwrap();
    }
    writeln!(
        svg,
        r##"<line x1="{LEFT}" y1="{0}" x2="{width}" y2="{0}" stroke="#888" stroke-dasharray="4 3"/>"##,
        y(1.0)
    )
    .unwrap();
    for (i, r) in results.iter().enumerate() {
        let x = LEFT + GAP + i as f64 * (BAR + GAP);
        let top = y(r.speedup.max(0.0));
        let label = escape(&format!("{} n={} {}MB", r.spec.pattern, r.spec.n, r.spec.payload_mb));
        writeln!(
            svg,
            r##"<rect x="{x}" y="{top:.2}" width="{BAR}" height="{:.2}" fill="#4a7ebb"><title>{label}: {:.2}x</title></rect>"##,
            TOP + PLOT_H - top,
            r.speedup
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="middle">{:.2}</text>"#,
            x + BAR / 2.0,
            top - 4.0,
            r.speedup
        )
        .unwrap();
        let (lx, ly) = (x + BAR / 2.0, TOP + PLOT_H + 12.0);
        writeln!(svg, r#"<text x="{lx}" y="{ly}" transform="rotate(45 {lx} {ly})">{label}</text>"#).unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `results.csv`, `summary.txt` and `speedup.svg` into `out_dir`,
/// creating it if needed. Returns the paths written.
pub fn emit_report(results: &[BenchmarkResult], out_dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if results.is_empty() {
        return Err(BenchError::EmptyResults);
    }
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("results.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for row in csv_rows(results) {
        w.serialize(row)?;
    }
    w.flush()?;
    let summary = out_dir.join("summary.txt");
    fs::write(&summary, summary_table(results))?;
    let svg = out_dir.join("speedup.svg");
    fs::write(&svg, speedup_svg(results))?;
    Ok(vec![csv_path, summary, svg])
}
