//! Central engine: runs one workflow against a set of proxies.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use circulate::orchestrator::{new_run_id, Engine};
use circulate::proxy::Cluster;
use circulate::transport::Topology;
use circulate::workflow::{parse_workflow, ExecutionMode};
use circulate::workloads::ServiceRegistry;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(version, about = "Workflow engine with pure-orchestration and circulate modes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a workflow document and print its run report.
    Run {
        #[arg(long)]
        workflow: PathBuf,
        /// `pure` or `circulate`.
        #[arg(long, default_value = "circulate")]
        mode: ExecutionMode,
        /// Sites with port 0 are served by proxies inside this process.
        #[arg(long)]
        topology: PathBuf,
        /// Derives the run id; a random id is used when absent.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report JSON here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = circulate::orchestrator::DEFAULT_MAX_IN_FLIGHT)]
        max_in_flight: usize,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Command::Run { workflow, mode, topology, seed, report, max_in_flight } = Cli::parse().command;

    let doc = fs::read_to_string(&workflow).with_context(|| format!("reading {}", workflow.display()))?;
    let def = parse_workflow(&doc)?;
    let topology = Topology::load(&topology)?;
    let local = topology.sites().iter().all(|s| s.addr.ends_with(":0"));
    let cluster = if local { Some(Cluster::launch(&topology, ServiceRegistry::standard())?) } else { None };
    let topology = cluster.as_ref().map(|c| c.topology().clone()).unwrap_or_else(|| Arc::new(topology));

    let run_id = match seed {
        Some(s) => format!("{}-{}-{s:016x}", def.workflow_id, mode.as_str()),
        None => new_run_id(),
    };
    let result = Engine::new(topology).with_max_in_flight(max_in_flight).execute(&def, mode, &run_id)?;
    log::info!(
        "{run_id}: makespan {:.3}s, engine payload {} B, p2p payload {} B",
        result.makespan_s,
        result.engine_payload_bytes,
        result.p2p_payload_bytes
    );
    match report {
        Some(path) => fs::write(&path, result.to_json()).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{}", result.to_json()),
    }
    Ok(())
}
