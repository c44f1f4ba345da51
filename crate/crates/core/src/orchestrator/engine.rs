use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread::Scope;
use std::time::Instant;

use log::{debug, warn};
use uuid::Uuid;

use super::plan::{plan_transfers, RunState};
use super::report::{RunReport, TaskSpan, TransferSpan};
use super::EngineError;
use crate::transport::{Channel, Header, Message, Topology, TransportError, WireInput, ENGINE_SITE};
use crate::workflow::{
    ready_tasks, sha256_hex, validate_dag, DataReference, ExecutionMode, InputBinding, TaskNode, WorkflowDefinition,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// One frame crossing an engine link, as seen by a [`Tap`].
#[derive(Debug)]
pub struct TapEvent<'a> {
    pub direction: Direction,
    pub site: &'a str,
    pub header: &'a Header,
    pub payload_len: usize,
    pub frame_len: usize,
}

pub type Tap = Arc<dyn Fn(&TapEvent<'_>) + Send + Sync>;

#[derive(Default)]
struct Counters {
    payload: u64,
    control: u64,
    p2p: u64,
    messages: BTreeMap<String, u64>,
}

impl Counters {
    fn record(&mut self, header: &Header, payload_len: usize, frame_len: usize) {
        self.payload += payload_len as u64;
        self.control += (frame_len - payload_len) as u64;
        *self.messages.entry(header.msg_type().to_string()).or_default() += 1;
    }
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 16;

/// The central engine. Holds no per-run state; each [`Engine::execute`]
/// call is an independent run.
#[derive(Clone)]
pub struct Engine {
    topology: Arc<Topology>,
    max_in_flight: usize,
    tap: Option<Tap>,
}

pub fn new_run_id() -> String {
    Uuid::new_v4().to_string()
}

/// Runs `def` once against the proxies of `topology` with default settings.
pub fn execute(def: &WorkflowDefinition, mode: ExecutionMode, topology: &Topology) -> Result<RunReport, EngineError> {
    Engine::new(Arc::new(topology.clone())).execute(def, mode, &new_run_id())
}

enum Event {
    Transferred { job: usize, result: Result<u64, EngineError>, start: f64, end: f64 },
    Invoked { task_id: String, result: Result<Message, EngineError>, start: f64, end: f64 },
}

struct TransferJob {
    source: String,
    target: String,
    refs: Vec<String>,
    for_task: String,
}

struct Outcome {
    timeline: Vec<TaskSpan>,
    transfers: Vec<TransferSpan>,
    result_digests: BTreeMap<String, String>,
    output_sizes: BTreeMap<String, u64>,
    makespan_s: f64,
}

impl Engine {
    pub fn new(topology: Arc<Topology>) -> Self {
        Engine { topology, max_in_flight: DEFAULT_MAX_IN_FLIGHT, tap: None }
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_tap(mut self, tap: Tap) -> Self {
        self.tap = Some(tap);
        self
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    /// Runs every task once in dependency order, then fetches sink results.
    /// Every proxy is told to flush the run afterwards, whether or not the
    /// run succeeded.
    pub fn execute(
        &self,
        def: &WorkflowDefinition,
        mode: ExecutionMode,
        run_id: &str,
    ) -> Result<RunReport, EngineError> {
        validate_dag(def)?;
        for t in &def.tasks {
            if t.site_id == ENGINE_SITE || !self.topology.contains(&t.site_id) {
                return Err(EngineError::Unreachable(t.site_id.clone()));
            }
        }
        let counters = Mutex::new(Counters::default());
        let started = Instant::now();
        let outcome = std::thread::scope(|scope| self.drive(scope, def, mode, run_id, &counters, started));
        self.flush_all(run_id, &counters);
        let outcome = outcome?;
        let c = counters.into_inner().expect("counters lock");
        Ok(RunReport {
            run_id: run_id.to_string(),
            mode,
            makespan_s: outcome.makespan_s,
            engine_payload_bytes: c.payload,
            engine_control_bytes: c.control,
            p2p_payload_bytes: c.p2p,
            message_counts: c.messages,
            task_timeline: outcome.timeline,
            transfers: outcome.transfers,
            result_digests: outcome.result_digests,
            output_sizes: outcome.output_sizes,
        })
    }

    fn rpc(&self, site: &str, msg: Message, counters: &Mutex<Counters>) -> Result<Message, EngineError> {
        let mut ch = Channel::connect(self.topology.clone(), ENGINE_SITE, site).map_err(|e| match e {
            TransportError::Io(_) => EngineError::Unreachable(site.to_string()),
            other => EngineError::Transport(other),
        })?;
        let sent = ch.send(&msg)?;
        self.observe(Direction::Sent, site, &msg, sent, counters);
        let (reply, received) = ch.recv()?;
        self.observe(Direction::Received, site, &reply, received, counters);
        if let Header::Error { code, detail, .. } = &reply.header {
            return Err(EngineError::Remote { site: site.to_string(), code: code.clone(), detail: detail.clone() });
        }
        Ok(reply)
    }

    fn observe(&self, direction: Direction, site: &str, msg: &Message, frame_len: usize, counters: &Mutex<Counters>) {
        counters.lock().expect("counters lock").record(&msg.header, msg.payload.len(), frame_len);
        if let Some(tap) = &self.tap {
            tap(&TapEvent { direction, site, header: &msg.header, payload_len: msg.payload.len(), frame_len });
        }
    }

    fn drive<'scope, 'env>(
        &'env self,
        scope: &'scope Scope<'scope, 'env>,
        def: &'env WorkflowDefinition,
        mode: ExecutionMode,
        run_id: &'env str,
        counters: &'env Mutex<Counters>,
        started: Instant,
    ) -> Result<Outcome, EngineError> {
        let (tx, rx) = mpsc::channel::<Event>();
        let since = move || started.elapsed().as_secs_f64();

        let mut state = RunState::new(run_id);
        let mut jobs: Vec<TransferJob> = Vec::new();
        let mut waiting: BTreeMap<String, BTreeSet<(String, String)>> = BTreeMap::new();
        let mut acked: BTreeSet<(String, String)> = BTreeSet::new();
        let mut payloads: BTreeMap<String, Arc<Vec<u8>>> = BTreeMap::new();
        let mut timeline = Vec::new();
        let mut transfers = Vec::new();
        let mut outstanding = 0usize;

        while state.completed.len() < def.tasks.len() {
            for task_id in ready_tasks(def, &state.completed) {
                if state.in_flight.contains(&task_id) || waiting.contains_key(&task_id) {
                    continue;
                }
                let task = def.task(&task_id).expect("ready task exists");
                let mut needed = BTreeSet::new();
                if mode == ExecutionMode::Circulate {
                    needed = remote_inputs(task, &state);
                    for (source, header) in plan_transfers(def, task, &state) {
                        let Header::TransferRequest { refs, target_site, .. } = &header else { unreachable!() };
                        for r in refs {
                            state.staged.insert((r.clone(), target_site.clone()));
                        }
                        jobs.push(TransferJob {
                            source: source.clone(),
                            target: target_site.clone(),
                            refs: refs.clone(),
                            for_task: task_id.clone(),
                        });
                        let job = jobs.len() - 1;
                        let tx = tx.clone();
                        outstanding += 1;
                        debug!("run {run_id}: transfer {refs:?} {source} -> {target_site}");
                        scope.spawn(move || {
                            let start = since();
                            let result = self.rpc(&source, Message::control(header), counters).and_then(|reply| {
                                match reply.header {
                                    Header::TransferAck { pushed_payload_bytes, .. } => Ok(pushed_payload_bytes),
                                    other => Err(EngineError::Protocol(format!(
                                        "expected TransferAck, got {}",
                                        other.msg_type()
                                    ))),
                                }
                            });
                            let _ = tx.send(Event::Transferred { job, result, start, end: since() });
                        });
                    }
                }
                waiting.insert(task_id, needed);
            }

            let runnable: Vec<String> = waiting
                .iter()
                .filter(|(_, needed)| needed.is_subset(&acked))
                .map(|(t, _)| t.clone())
                .take(self.max_in_flight.saturating_sub(state.in_flight.len()))
                .collect();
            for task_id in runnable {
                waiting.remove(&task_id);
                let task = def.task(&task_id).expect("task exists");
                let msg = invoke_message(task, mode, &state, &payloads);
                state.in_flight.insert(task_id.clone());
                let tx = tx.clone();
                outstanding += 1;
                scope.spawn(move || {
                    let start = since();
                    let result = self.rpc(&task.site_id, msg, counters);
                    let _ = tx.send(Event::Invoked { task_id: task.task_id.clone(), result, start, end: since() });
                });
            }

            if outstanding == 0 {
                return Err(EngineError::Protocol("scheduler stalled with nothing in flight".into()));
            }
            let event = rx.recv().expect("workers hold a sender");
            outstanding -= 1;
            match event {
                Event::Transferred { job, result, start, end } => {
                    let job = &jobs[job];
                    let pushed = result.map_err(|e| EngineError::TaskFailed {
                        task_id: job.for_task.clone(),
                        cause: format!("staging {:?} from {} to {}: {e}", job.refs, job.source, job.target),
                    })?;
                    counters.lock().expect("counters lock").p2p += pushed;
                    acked.extend(job.refs.iter().map(|r| (r.clone(), job.target.clone())));
                    transfers.push(TransferSpan {
                        source_site: job.source.clone(),
                        target_site: job.target.clone(),
                        refs: job.refs.clone(),
                        for_task: job.for_task.clone(),
                        start_s: start,
                        end_s: end,
                        payload_bytes: pushed,
                    });
                }
                Event::Invoked { task_id, result, start, end } => {
                    let reply = result.map_err(|e| match e {
                        EngineError::Unreachable(site) => EngineError::Unreachable(site),
                        other => EngineError::TaskFailed { task_id: task_id.clone(), cause: other.to_string() },
                    })?;
                    let reference = accept_invoke_reply(&task_id, mode, reply, &mut payloads)?;
                    state.complete(&task_id, reference);
                    timeline.push(TaskSpan { task_id, start_s: start, end_s: end });
                }
            }
        }

        let result_digests = match mode {
            ExecutionMode::PureOrchestration => {
                def.sinks.iter().map(|s| (s.clone(), sha256_hex(&payloads[s]))).collect()
            }
            ExecutionMode::Circulate => self.materialize_sinks(scope, def, &state, counters)?,
        };
        let makespan_s = since();
        let output_sizes = state.ref_of.iter().map(|(t, r)| (t.clone(), r.size_bytes)).collect();
        Ok(Outcome { timeline, transfers, result_digests, output_sizes, makespan_s })
    }

    fn materialize_sinks<'scope, 'env>(
        &'env self,
        scope: &'scope Scope<'scope, 'env>,
        def: &'env WorkflowDefinition,
        state: &RunState,
        counters: &'env Mutex<Counters>,
    ) -> Result<BTreeMap<String, String>, EngineError> {
        let sinks: BTreeSet<&String> = def.sinks.iter().collect();
        let handles: Vec<_> = sinks
            .into_iter()
            .map(|sink| {
                let reference = state.ref_of[sink].clone();
                let msg = Message::control(Header::MaterializeRequest {
                    run_id: state.run_id.clone(),
                    ref_id: reference.ref_id.clone(),
                });
                let handle = scope.spawn(move || self.rpc(&reference.proxy_site, msg, counters));
                (sink, state.ref_of[sink].clone(), handle)
            })
            .collect();
        let mut digests = BTreeMap::new();
        for (sink, reference, handle) in handles {
            let reply = handle.join().expect("materialize worker")?;
            if !reference.matches(&reply.payload) {
                return Err(EngineError::Protocol(format!("materialized bytes of {sink} do not match {reference}")));
            }
            digests.insert(sink.clone(), reference.content_digest);
        }
        Ok(digests)
    }

    fn flush_all(&self, run_id: &str, counters: &Mutex<Counters>) {
        std::thread::scope(|scope| {
            for site in self.topology.site_ids() {
                scope.spawn(move || {
                    let msg = Message::control(Header::FlushRequest { run_id: run_id.to_string() });
                    if let Err(e) = self.rpc(site, msg, counters) {
                        warn!("flush of run {run_id} at {site} failed: {e}");
                    }
                });
            }
        });
    }
}

/// `(ref_id, consumer site)` pairs that must be staged before `task` runs.
fn remote_inputs(task: &TaskNode, state: &RunState) -> BTreeSet<(String, String)> {
    task.edge_sources()
        .map(|p| &state.ref_of[p])
        .filter(|r| r.proxy_site != task.site_id)
        .map(|r| (r.ref_id.clone(), task.site_id.clone()))
        .collect()
}

fn invoke_message(
    task: &TaskNode,
    mode: ExecutionMode,
    state: &RunState,
    payloads: &BTreeMap<String, Arc<Vec<u8>>>,
) -> Message {
    let mut inputs = Vec::with_capacity(task.inputs.len());
    let mut payload = Vec::new();
    for input in &task.inputs {
        match (input, mode) {
            (InputBinding::Literal { bytes }, _) => {
                inputs.push(WireInput::literal(bytes.len()));
                payload.extend_from_slice(bytes);
            }
            (InputBinding::Edge { source_task }, ExecutionMode::Circulate) => {
                inputs.push(WireInput::Ref { reference: state.ref_of[source_task].clone() });
            }
            (InputBinding::Edge { source_task }, ExecutionMode::PureOrchestration) => {
                let bytes = &payloads[source_task];
                inputs.push(WireInput::literal(bytes.len()));
                payload.extend_from_slice(bytes);
            }
        }
    }
    Message::with_payload(
        Header::InvokeRequest {
            run_id: state.run_id.clone(),
            task_id: task.task_id.clone(),
            service_op: task.service_op.clone(),
            inputs,
            return_payload: mode == ExecutionMode::PureOrchestration,
        },
        payload,
    )
}

fn accept_invoke_reply(
    task_id: &str,
    mode: ExecutionMode,
    reply: Message,
    payloads: &mut BTreeMap<String, Arc<Vec<u8>>>,
) -> Result<DataReference, EngineError> {
    let Header::InvokeResponse { reference: Some(reference), .. } = reply.header else {
        return Err(EngineError::Protocol(format!("{task_id}: expected InvokeResponse with a reference")));
    };
    match mode {
        ExecutionMode::Circulate if !reply.payload.is_empty() => {
            Err(EngineError::Protocol(format!("{task_id}: payload returned in circulate mode")))
        }
        ExecutionMode::PureOrchestration if !reference.matches(&reply.payload) => {
            Err(EngineError::Protocol(format!("{task_id}: returned payload does not match {reference}")))
        }
        ExecutionMode::PureOrchestration => {
            payloads.insert(task_id.to_string(), Arc::new(reply.payload));
            Ok(reference)
        }
        ExecutionMode::Circulate => Ok(reference),
    }
}
