//! Benchmark harness: runs both execution modes and writes reports.

use std::path::PathBuf;

use anyhow::Result;
use circulate::bench::{emit_report, load_suite, run_benchmark, summary_table, BenchmarkSpec, Pattern};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(version, about = "Compare pure orchestration with circulate on workflow patterns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark spec.
    Run {
        /// pipeline, fan_in, fan_out or fig3_scenario.
        #[arg(long)]
        pattern: Pattern,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 10.0)]
        payload_mb: f64,
        #[arg(long)]
        topology: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run every spec in a JSON list.
    Suite {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (specs, out) = match Cli::parse().command {
        Command::Run { pattern, n, payload_mb, topology, seed, reps, out } => {
            let spec = BenchmarkSpec { pattern, n, payload_mb, topology_file: topology, seed, repetitions: reps };
            (vec![spec], out)
        }
        Command::Suite { config, out } => (load_suite(&config)?, out),
    };
    let mut results = Vec::with_capacity(specs.len());
    for spec in &specs {
        log::info!("{} n={} {} MB x{}", spec.pattern, spec.n, spec.payload_mb, spec.repetitions);
        results.push(run_benchmark(spec)?);
    }
    for path in emit_report(&results, &out)? {
        log::info!("wrote {}", path.display());
    }
    print!("{}", summary_table(&results));
    Ok(())
}
