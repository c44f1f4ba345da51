//! Workflow definitions: tasks, data edges, references and execution modes.
//!
//! A workflow is a DAG of service invocations. Each task runs at one site and
//! consumes an ordered list of inputs, each either the output of another task
//! (an edge) or inline literal bytes.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WorkflowError {
    #[error("malformed workflow document: {0}")]
    MalformedDocument(String),
    #[error("task {consumer} consumes unknown task {source_task}")]
    DanglingEdge { consumer: String, source_task: String },
    #[error("duplicate task id {0}")]
    DuplicateTaskId(String),
    #[error("sink {0} is not a task of this workflow")]
    UnknownSink(String),
    #[error("cycle detected through tasks {0:?}")]
    CycleDetected(Vec<String>),
}

/// One input of a task, in argument order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputBinding {
    /// Output of the named producer task.
    Edge { source_task: String },
    /// Bytes carried inline in the workflow.
    Literal { bytes: Vec<u8> },
}

impl InputBinding {
    pub fn edge(source_task: impl Into<String>) -> Self {
        InputBinding::Edge { source_task: source_task.into() }
    }

    pub fn literal(bytes: impl Into<Vec<u8>>) -> Self {
        InputBinding::Literal { bytes: bytes.into() }
    }

    pub fn source_task(&self) -> Option<&str> {
        match self {
            InputBinding::Edge { source_task } => Some(source_task),
            InputBinding::Literal { .. } => None,
        }
    }
}

// Wire form: {"edge": "<task>"} | {"literal_b64": "<base64>"}
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum InputBindingDoc {
    Edge { edge: String },
    Literal { literal_b64: String },
}

impl Serialize for InputBinding {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            InputBinding::Edge { source_task } => InputBindingDoc::Edge { edge: source_task.clone() },
            InputBinding::Literal { bytes } => InputBindingDoc::Literal { literal_b64: B64.encode(bytes) },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for InputBinding {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match InputBindingDoc::deserialize(d)? {
            InputBindingDoc::Edge { edge } => Ok(InputBinding::Edge { source_task: edge }),
            InputBindingDoc::Literal { literal_b64 } => B64
                .decode(literal_b64.as_bytes())
                .map(|bytes| InputBinding::Literal { bytes })
                .map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskNode {
    pub task_id: String,
    pub site_id: String,
    pub service_op: String,
    pub inputs: Vec<InputBinding>,
    pub output_name: String,
}

impl TaskNode {
    pub fn new(
        task_id: impl Into<String>,
        site_id: impl Into<String>,
        service_op: impl Into<String>,
        inputs: Vec<InputBinding>,
    ) -> Self {
        let task_id = task_id.into();
        TaskNode {
            output_name: format!("R-{task_id}"),
            task_id,
            site_id: site_id.into(),
            service_op: service_op.into(),
            inputs,
        }
    }

    /// Producer task ids in input order, duplicates kept.
    pub fn edge_sources(&self) -> impl Iterator<Item = &str> {
        self.inputs.iter().filter_map(InputBinding::source_task)
    }

    pub fn literal_bytes(&self) -> u64 {
        self.inputs
            .iter()
            .map(|i| match i {
                InputBinding::Literal { bytes } => bytes.len() as u64,
                InputBinding::Edge { .. } => 0,
            })
            .sum()
    }
}

/// A validated workflow. Construct through [`WorkflowDefinition::new`] or
/// [`parse_workflow`]; both check ids, edges and sinks, and both treat an
/// empty sink list as "every task nothing consumes".
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WorkflowDefinition {
    pub workflow_id: String,
    pub tasks: Vec<TaskNode>,
    pub sinks: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkflowDoc {
    workflow_id: String,
    tasks: Vec<TaskNode>,
    sinks: Vec<String>,
}

impl WorkflowDefinition {
    pub fn new(
        workflow_id: impl Into<String>,
        tasks: Vec<TaskNode>,
        sinks: Vec<String>,
    ) -> Result<Self, WorkflowError> {
        let mut def = WorkflowDefinition { workflow_id: workflow_id.into(), tasks, sinks };
        def.check_structure()?;
        def.default_sinks();
        Ok(def)
    }

    fn default_sinks(&mut self) {
        if !self.sinks.is_empty() {
            return;
        }
        let consumed: BTreeSet<&str> = self.edges().into_iter().map(|(p, _)| p).collect();
        self.sinks =
            self.tasks.iter().filter(|t| !consumed.contains(t.task_id.as_str())).map(|t| t.task_id.clone()).collect();
    }

    fn check_structure(&self) -> Result<(), WorkflowError> {
        let mut ids = BTreeSet::new();
        for t in &self.tasks {
            if !ids.insert(t.task_id.as_str()) {
                return Err(WorkflowError::DuplicateTaskId(t.task_id.clone()));
            }
        }
        for t in &self.tasks {
            for src in t.edge_sources() {
                if src == t.task_id || !ids.contains(src) {
                    return Err(WorkflowError::DanglingEdge {
                        consumer: t.task_id.clone(),
                        source_task: src.to_string(),
                    });
                }
            }
        }
        for s in &self.sinks {
            if !ids.contains(s.as_str()) {
                return Err(WorkflowError::UnknownSink(s.clone()));
            }
        }
        Ok(())
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskNode> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    /// All data edges as (producer, consumer) pairs, one per edge input.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        self.tasks.iter().flat_map(|t| t.edge_sources().map(move |s| (s, t.task_id.as_str()))).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workflow serializes")
    }
}

/// Parses and structurally validates a workflow document.
pub fn parse_workflow(document: &str) -> Result<WorkflowDefinition, WorkflowError> {
    let doc: WorkflowDoc =
        serde_json::from_str(document).map_err(|e| WorkflowError::MalformedDocument(e.to_string()))?;
    let mut def = WorkflowDefinition { workflow_id: doc.workflow_id, tasks: doc.tasks, sinks: doc.sinks };
    def.check_structure()?;
    def.default_sinks();
    Ok(def)
}

/// Kahn's algorithm; among ready tasks the smallest task_id goes first.
pub fn validate_dag(def: &WorkflowDefinition) -> Result<Vec<String>, WorkflowError> {
    let mut indegree: BTreeMap<&str, usize> = def.tasks.iter().map(|t| (t.task_id.as_str(), 0)).collect();
    let mut consumers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for t in &def.tasks {
        let producers: BTreeSet<&str> = t.edge_sources().collect();
        *indegree.get_mut(t.task_id.as_str()).expect("known task") = producers.len();
        for p in producers {
            consumers.entry(p).or_default().push(&t.task_id);
        }
    }

    let mut heap: BinaryHeap<Reverse<&str>> =
        indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| Reverse(*id)).collect();
    let mut order = Vec::with_capacity(def.tasks.len());
    while let Some(Reverse(id)) = heap.pop() {
        order.push(id.to_string());
        for c in consumers.get(id).into_iter().flatten() {
            let d = indegree.get_mut(c).expect("known task");
            *d -= 1;
            if *d == 0 {
                heap.push(Reverse(c));
            }
        }
    }

    if order.len() < def.tasks.len() {
        let remaining: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d > 0).map(|(id, _)| *id).collect();
        return Err(WorkflowError::CycleDetected(find_cycle(def, &remaining)));
    }
    Ok(order)
}

// Every task left after Kahn has a producer that is also left, so walking
// producers from any of them must revisit a task.
fn find_cycle(def: &WorkflowDefinition, remaining: &BTreeSet<&str>) -> Vec<String> {
    let start = *remaining.iter().next().expect("non-empty remainder");
    let mut path: Vec<&str> = vec![start];
    let mut cur = start;
    loop {
        let task = def.task(cur).expect("known task");
        let next =
            task.edge_sources().filter(|s| remaining.contains(s)).min().expect("blocked task has a blocked producer");
        if let Some(pos) = path.iter().position(|p| *p == next) {
            let mut cycle: Vec<String> = path[pos..].iter().map(|s| s.to_string()).collect();
            cycle.reverse();
            return cycle;
        }
        path.push(next);
        cur = next;
    }
}

pub fn ready_tasks(def: &WorkflowDefinition, completed: &BTreeSet<String>) -> BTreeSet<String> {
    def.tasks
        .iter()
        .filter(|t| !completed.contains(&t.task_id))
        .filter(|t| t.edge_sources().all(|s| completed.contains(s)))
        .map(|t| t.task_id.clone())
        .collect()
}

/// A payload held at a proxy, named instead of shipped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataReference {
    pub ref_id: String,
    pub proxy_site: String,
    pub size_bytes: u64,
    pub content_digest: String,
}

impl DataReference {
    pub fn for_payload(ref_id: impl Into<String>, proxy_site: impl Into<String>, payload: &[u8]) -> Self {
        DataReference {
            ref_id: ref_id.into(),
            proxy_site: proxy_site.into(),
            size_bytes: payload.len() as u64,
            content_digest: sha256_hex(payload),
        }
    }

    pub fn matches(&self, payload: &[u8]) -> bool {
        self.size_bytes == payload.len() as u64 && self.content_digest == sha256_hex(payload)
    }
}

impl fmt::Display for DataReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}@{}", self.ref_id, self.proxy_site)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    /// Every output returns to the engine and is re-sent to its consumers.
    PureOrchestration,
    /// Outputs stay at proxies; the engine handles references only.
    Circulate,
}

impl ExecutionMode {
    pub const ALL: [ExecutionMode; 2] = [ExecutionMode::PureOrchestration, ExecutionMode::Circulate];

    pub fn as_str(self) -> &'static str {
        match self {
            ExecutionMode::PureOrchestration => "pure_orchestration",
            ExecutionMode::Circulate => "circulate",
        }
    }
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExecutionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pure" | "pure_orchestration" => Ok(ExecutionMode::PureOrchestration),
            "circulate" => Ok(ExecutionMode::Circulate),
            other => Err(format!("unknown execution mode {other:?} (expected pure or circulate)")),
        }
    }
}
