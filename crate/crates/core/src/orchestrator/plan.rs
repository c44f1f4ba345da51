use std::collections::{BTreeMap, BTreeSet};

use crate::transport::Header;
use crate::workflow::{DataReference, TaskNode, WorkflowDefinition};

/// Engine-side view of a run.
#[derive(Debug, Clone, Default)]
pub struct RunState {
    pub run_id: String,
    pub completed: BTreeSet<String>,
    pub in_flight: BTreeSet<String>,
    pub ref_of: BTreeMap<String, DataReference>,
    /// `(ref_id, site)` pairs already requested, acknowledged or not.
    pub staged: BTreeSet<(String, String)>,
}

impl RunState {
    pub fn new(run_id: impl Into<String>) -> Self {
        RunState { run_id: run_id.into(), ..Default::default() }
    }

    pub fn complete(&mut self, task_id: &str, reference: DataReference) {
        self.in_flight.remove(task_id);
        self.completed.insert(task_id.to_string());
        self.ref_of.insert(task_id.to_string(), reference);
    }
}

/// Transfers needed before `task` can run at its site: one request per
/// source proxy, naming every input reference it holds that is neither
/// local to the consumer nor already staged there.
pub fn plan_transfers(def: &WorkflowDefinition, task: &TaskNode, state: &RunState) -> Vec<(String, Header)> {
    debug_assert!(def.task(&task.task_id).is_some());
    let mut by_source: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for producer in task.edge_sources() {
        let r = state.ref_of.get(producer).expect("producer completed before its consumer is planned");
        if r.proxy_site == task.site_id || state.staged.contains(&(r.ref_id.clone(), task.site_id.clone())) {
            continue;
        }
        let refs = by_source.entry(&r.proxy_site).or_default();
        if !refs.contains(&r.ref_id) {
            refs.push(r.ref_id.clone());
        }
    }
    by_source
        .into_iter()
        .map(|(source, refs)| {
            (
                source.to_string(),
                Header::TransferRequest {
                    run_id: state.run_id.clone(),
                    refs,
                    target_site: task.site_id.clone(),
                    source_site: None,
                },
            )
        })
        .collect()
}
