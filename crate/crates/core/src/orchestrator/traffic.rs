//! Analytic payload traffic of a run, from output sizes alone.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::workflow::{ExecutionMode, WorkflowDefinition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficPrediction {
    pub engine_payload_bytes: u64,
    pub p2p_payload_bytes: u64,
}

/// Payload bytes that cross engine links and proxy-to-proxy links.
///
/// Literal inputs travel engine→proxy in both modes. In pure orchestration
/// every output comes back to the engine and is re-sent once per consuming
/// edge. In circulate mode only sink outputs reach the engine, and each
/// output moves once to every other site that consumes it.
///
/// Panics if `sizes` lacks a task.
pub fn traffic_model(
    def: &WorkflowDefinition,
    sizes: &BTreeMap<String, u64>,
    mode: ExecutionMode,
) -> TrafficPrediction {
    let size = |t: &str| *sizes.get(t).unwrap_or_else(|| panic!("no output size for task {t}"));
    let literals: u64 = def.tasks.iter().map(|t| t.literal_bytes()).sum();
    match mode {
        ExecutionMode::PureOrchestration => {
            let returned: u64 = def.tasks.iter().map(|t| size(&t.task_id)).sum();
            let resent: u64 = def.edges().iter().map(|(p, _)| size(p)).sum();
            TrafficPrediction { engine_payload_bytes: literals + returned + resent, p2p_payload_bytes: 0 }
        }
        ExecutionMode::Circulate => {
            let sinks: BTreeSet<&str> = def.sinks.iter().map(String::as_str).collect();
            let materialized: u64 = sinks.iter().map(|s| size(s)).sum();
            let mut moves: BTreeSet<(&str, &str)> = BTreeSet::new();
            for t in &def.tasks {
                for p in t.edge_sources() {
                    let producer = def.task(p).expect("validated edge");
                    if producer.site_id != t.site_id {
                        moves.insert((p, &t.site_id));
                    }
                }
            }
            let p2p = moves.iter().map(|(p, _)| size(p)).sum();
            TrafficPrediction { engine_payload_bytes: literals + materialized, p2p_payload_bytes: p2p }
        }
    }
}
