//! The central engine: schedules tasks, stages references between proxies
//! and accounts for every byte that crosses an engine link.

mod engine;
mod plan;
mod report;
mod traffic;

pub use engine::{execute, new_run_id, Direction, Engine, Tap, TapEvent, DEFAULT_MAX_IN_FLIGHT};
pub use plan::{plan_transfers, RunState};
pub use report::{RunReport, TaskSpan, TransferSpan};
pub use traffic::{traffic_model, TrafficPrediction};

use crate::transport::TransportError;
use crate::workflow::WorkflowError;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error("task {task_id} failed: {cause}")]
    TaskFailed { task_id: String, cause: String },
    #[error("site {0} unreachable")]
    Unreachable(String),
    #[error("{site} answered {code}: {detail}")]
    Remote { site: String, code: String, detail: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}
