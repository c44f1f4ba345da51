use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::workflow::ExecutionMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpan {
    pub task_id: String,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSpan {
    pub source_site: String,
    pub target_site: String,
    pub refs: Vec<String>,
    /// Task whose inputs this transfer staged.
    pub for_task: String,
    pub start_s: f64,
    pub end_s: f64,
    pub payload_bytes: u64,
}

/// Metrics of one engine run. Times are seconds from the start of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub mode: ExecutionMode,
    pub makespan_s: f64,
    /// Payload bytes on engine↔proxy links, both directions.
    pub engine_payload_bytes: u64,
    /// Everything else on engine↔proxy links: length prefixes, headers,
    /// separators.
    pub engine_control_bytes: u64,
    pub p2p_payload_bytes: u64,
    /// Frames sent or received by the engine, by message type.
    pub message_counts: BTreeMap<String, u64>,
    pub task_timeline: Vec<TaskSpan>,
    pub transfers: Vec<TransferSpan>,
    pub result_digests: BTreeMap<String, String>,
    pub output_sizes: BTreeMap<String, u64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn span(&self, task_id: &str) -> Option<&TaskSpan> {
        self.task_timeline.iter().find(|s| s.task_id == task_id)
    }

    pub fn count(&self, msg_type: &str) -> u64 {
        self.message_counts.get(msg_type).copied().unwrap_or(0)
    }
}
