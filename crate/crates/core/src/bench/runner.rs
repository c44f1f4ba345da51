use std::collections::BTreeMap;
use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};

use super::patterns::{build_pattern, BenchmarkSpec};
use super::BenchError;
use crate::orchestrator::{Engine, RunReport};
use crate::proxy::Cluster;
use crate::transport::Topology;
use crate::workflow::ExecutionMode;
use crate::workloads::ServiceRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub makespan_s: f64,
    pub makespans_s: Vec<f64>,
    pub engine_payload_bytes: u64,
    pub p2p_payload_bytes: u64,
    pub output_sizes: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub spec: BenchmarkSpec,
    pub pure: ModeResult,
    pub circulate: ModeResult,
    /// Pure makespan over circulate makespan.
    pub speedup: f64,
    pub result_digests: BTreeMap<String, String>,
}

impl BenchmarkResult {
    pub fn mode(&self, mode: ExecutionMode) -> &ModeResult {
        match mode {
            ExecutionMode::PureOrchestration => &self.pure,
            ExecutionMode::Circulate => &self.circulate,
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Topologies whose addresses all use port 0 describe proxies this process
/// should host itself.
fn wants_local_cluster(topology: &Topology) -> bool {
    topology.sites().iter().all(|s| s.addr.ends_with(":0"))
}

/// Runs `spec` against the topology named in it.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkResult, BenchError> {
    let topology = Topology::load(&spec.topology_file)?;
    run_benchmark_on(spec, &topology)
}

/// Runs both modes `spec.repetitions` times, alternating modes within each
/// repetition. Proxies are launched in-process when the topology asks for
/// ephemeral ports, otherwise they must already be listening.
pub fn run_benchmark_on(spec: &BenchmarkSpec, topology: &Topology) -> Result<BenchmarkResult, BenchError> {
    spec.validate()?;
    let def = build_pattern(spec, topology)?;
    let cluster = if wants_local_cluster(topology) {
        Some(Cluster::launch(topology, ServiceRegistry::standard())?)
    } else {
        None
    };
    let topology = match &cluster {
        Some(c) => c.topology().clone(),
        None => Arc::new(topology.clone()),
    };
    let engine = Engine::new(topology);

    let mut reports: BTreeMap<ExecutionMode, Vec<RunReport>> = BTreeMap::new();
    for rep in 0..spec.repetitions {
        for mode in ExecutionMode::ALL {
            let run_id = format!("{}-{}-{rep}", def.workflow_id, mode.as_str());
            let report = engine.execute(&def, mode, &run_id)?;
            info!("{run_id}: makespan {:.3}s, engine payload {} B", report.makespan_s, report.engine_payload_bytes);
            reports.entry(mode).or_default().push(report);
        }
    }

    let pure = &reports[&ExecutionMode::PureOrchestration];
    let circ = &reports[&ExecutionMode::Circulate];
    for (p, c) in pure.iter().zip(circ) {
        for (sink, digest) in &p.result_digests {
            if c.result_digests.get(sink) != Some(digest) {
                return Err(BenchError::EquivalenceViolation {
                    sink: sink.clone(),
                    pure: digest.clone(),
                    circulate: c.result_digests.get(sink).cloned().unwrap_or_default(),
                });
            }
        }
    }
    let pure_result = summarize(pure)?;
    let circ_result = summarize(circ)?;
    Ok(BenchmarkResult {
        spec: spec.clone(),
        speedup: pure_result.makespan_s / circ_result.makespan_s,
        pure: pure_result,
        circulate: circ_result,
        result_digests: pure[0].result_digests.clone(),
    })
}

fn summarize(reports: &[RunReport]) -> Result<ModeResult, BenchError> {
    let first = &reports[0];
    for r in &reports[1..] {
        if (r.engine_payload_bytes, r.p2p_payload_bytes) != (first.engine_payload_bytes, first.p2p_payload_bytes) {
            return Err(BenchError::CounterDrift(format!(
                "{} run {}: {}/{} bytes vs {}/{}",
                r.mode.as_str(),
                r.run_id,
                r.engine_payload_bytes,
                r.p2p_payload_bytes,
                first.engine_payload_bytes,
                first.p2p_payload_bytes
            )));
        }
    }
    let makespans: Vec<f64> = reports.iter().map(|r| r.makespan_s).collect();
    Ok(ModeResult {
        makespan_s: median(&makespans),
        makespans_s: makespans,
        engine_payload_bytes: first.engine_payload_bytes,
        p2p_payload_bytes: first.p2p_payload_bytes,
        output_sizes: first.output_sizes.clone(),
    })
}
