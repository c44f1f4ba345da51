//! Proxy daemon for one site.

use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use circulate::proxy::{Proxy, ProxyServer};
use circulate::transport::Topology;
use circulate::workloads::ServiceRegistry;
use clap::Parser;

#[derive(Parser)]
#[command(version, about = "Serve one site's workloads and data references")]
struct Cli {
    #[arg(long)]
    site: String,
    #[arg(long)]
    topology: PathBuf,
    /// `all` or a comma-separated list of workload names.
    #[arg(long, default_value = "all")]
    workloads: String,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let topology = Arc::new(Topology::load(&cli.topology)?);
    let services = ServiceRegistry::from_spec(&cli.workloads)?;
    let addr = topology.addr(&cli.site)?.to_string();
    let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
    log::info!("proxy {} listening on {} with {:?}", cli.site, listener.local_addr()?, services);
    let proxy = Arc::new(Proxy::new(&cli.site, topology, services)?);
    ProxyServer::spawn(proxy, listener)?.join();
    Ok(())
}
