use std::net::{TcpListener, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, warn};
use uuid::Uuid;

use super::store::ProxyStore;
use super::ProxyError;
use crate::transport::{Channel, Header, Message, Topology, TransportError, WireInput, ENGINE_SITE};
use crate::workflow::DataReference;
use crate::workloads::ServiceRegistry;

/// Proxy-to-proxy push retries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, initial_backoff: Duration::from_millis(100) }
    }
}

/// The daemon colocated with one site's services.
pub struct Proxy {
    site: String,
    topology: Arc<Topology>,
    services: ServiceRegistry,
    store: ProxyStore,
    retry: RetryPolicy,
}

impl Proxy {
    pub fn new(site: &str, topology: Arc<Topology>, services: ServiceRegistry) -> Result<Self, TransportError> {
        topology.addr(site)?;
        Ok(Proxy {
            site: site.to_string(),
            topology,
            services,
            store: ProxyStore::default(),
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn site(&self) -> &str {
        &self.site
    }

    pub fn store(&self) -> &ProxyStore {
        &self.store
    }

    /// Answers one request. Failures become `Error` messages; the second
    /// value names the site the reply travels to.
    pub fn handle(&self, msg: Message) -> (Message, String) {
        let run_id = msg.header.run_id().to_string();
        let reply_to = match &msg.header {
            Header::TransferRequest { source_site: Some(src), .. } => src.clone(),
            _ => ENGINE_SITE.to_string(),
        };
        let result = match &msg.header {
            Header::InvokeRequest { .. } => self.handle_invoke(&msg),
            Header::TransferRequest { source_site: Some(_), .. } => self.handle_push(msg),
            Header::TransferRequest { .. } => self.handle_transfer(&msg),
            Header::MaterializeRequest { .. } => self.handle_materialize(&msg),
            Header::FlushRequest { .. } => Ok(self.handle_flush(&msg)),
            other => Err(ProxyError::BadRequest(format!("proxies do not accept {}", other.msg_type()))),
        };
        let reply = result.unwrap_or_else(|e| {
            debug!("proxy {}: {e}", self.site);
            Message::control(Header::error(run_id, e.code(), e.to_string()))
        });
        (reply, reply_to)
    }

    /// Runs the local service on resolved inputs and stores the output under
    /// a fresh reference. The payload comes back only if asked for.
    pub fn handle_invoke(&self, req: &Message) -> Result<Message, ProxyError> {
        let Header::InvokeRequest { run_id, task_id, service_op, inputs, return_payload } = &req.header else {
            return Err(ProxyError::BadRequest("expected InvokeRequest".into()));
        };
        let service = self.services.get(service_op).ok_or_else(|| ProxyError::UnknownServiceOp(service_op.clone()))?;

        let mut staged = Vec::new();
        for input in inputs {
            if let WireInput::Ref { reference } = input {
                let entry = self
                    .store
                    .get(&reference.ref_id)
                    .ok_or_else(|| ProxyError::ReferenceNotStaged(reference.ref_id.clone()))?;
                if entry.digest != reference.content_digest || entry.payload.len() as u64 != reference.size_bytes {
                    return Err(ProxyError::DigestMismatch(reference.ref_id.clone()));
                }
                staged.push(entry.payload);
            }
        }
        let mut args: Vec<&[u8]> = Vec::with_capacity(inputs.len());
        let (mut offset, mut next_staged) = (0usize, 0usize);
        for input in inputs {
            match input {
                WireInput::Ref { .. } => {
                    args.push(&staged[next_staged]);
                    next_staged += 1;
                }
                WireInput::Literal { len, .. } => {
                    let end = offset + *len as usize;
                    if end > req.payload.len() {
                        return Err(ProxyError::BadRequest("literal lengths exceed payload".into()));
                    }
                    args.push(&req.payload[offset..end]);
                    offset = end;
                }
            }
        }
        if offset != req.payload.len() {
            return Err(ProxyError::BadRequest("payload bytes not claimed by any literal input".into()));
        }

        let output = match catch_unwind(AssertUnwindSafe(|| service(&args))) {
            Ok(Ok(out)) => out,
            Ok(Err(e)) => return Err(ProxyError::ServiceFailure(e.to_string())),
            Err(_) => return Err(ProxyError::ServiceFailure(format!("{service_op} panicked"))),
        };
        let ref_id = Uuid::new_v4().to_string();
        let reference = DataReference::for_payload(&ref_id, &self.site, &output);
        let header =
            Header::InvokeResponse { run_id: run_id.clone(), task_id: task_id.clone(), reference: Some(reference) };
        let reply_payload = if *return_payload { output.clone() } else { Vec::new() };
        self.store.insert(&ref_id, run_id, output).map_err(|e| ProxyError::WriteOnce(e.0))?;
        Ok(Message::with_payload(header, reply_payload))
    }

    /// Pushes the named payloads to the proxy at `target_site` and acks once
    /// the target has stored them all.
    pub fn handle_transfer(&self, req: &Message) -> Result<Message, ProxyError> {
        let Header::TransferRequest { run_id, refs, target_site, .. } = &req.header else {
            return Err(ProxyError::BadRequest("expected TransferRequest".into()));
        };
        let entries = refs
            .iter()
            .map(|id| self.store.get(id).map(|e| (id, e)).ok_or_else(|| ProxyError::ReferenceNotFound(id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let ack = |pushed| {
            Message::control(Header::TransferAck {
                run_id: run_id.clone(),
                refs: refs.clone(),
                pushed_payload_bytes: pushed,
            })
        };
        if *target_site == self.site {
            return Ok(ack(0));
        }
        if !self.topology.contains(target_site) || target_site == ENGINE_SITE {
            return Err(ProxyError::BadRequest(format!("unknown target site {target_site}")));
        }

        let mut backoff = self.retry.initial_backoff;
        let mut last_err = String::new();
        for attempt in 1..=self.retry.attempts {
            match self.push_all(run_id, target_site, &entries) {
                Ok(pushed) => return Ok(ack(pushed)),
                Err(PushError::Rejected(e)) => return Err(e),
                Err(PushError::Transport(e)) => {
                    warn!("proxy {} push to {target_site} attempt {attempt} failed: {e}", self.site);
                    last_err = e.to_string();
                }
            }
            if attempt < self.retry.attempts {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(ProxyError::TargetUnreachable { site: target_site.clone(), detail: last_err })
    }

    fn push_all(
        &self,
        run_id: &str,
        target: &str,
        entries: &[(&String, super::store::StoredPayload)],
    ) -> Result<u64, PushError> {
        let mut ch = Channel::connect(self.topology.clone(), &self.site, target)?;
        let mut pushed = 0u64;
        for (id, entry) in entries {
            let msg = Message::with_payload(
                Header::TransferRequest {
                    run_id: run_id.to_string(),
                    refs: vec![(*id).clone()],
                    target_site: target.to_string(),
                    source_site: Some(self.site.clone()),
                },
                entry.payload.as_ref().clone(),
            );
            ch.send(&msg)?;
            match ch.recv()?.0.header {
                Header::TransferAck { .. } => pushed += entry.payload.len() as u64,
                Header::Error { code, detail, .. } => {
                    return Err(PushError::Rejected(ProxyError::BadRequest(format!(
                        "target {target}: {code}: {detail}"
                    ))))
                }
                other => {
                    return Err(PushError::Rejected(ProxyError::BadRequest(format!(
                        "target {target} answered {}",
                        other.msg_type()
                    ))))
                }
            }
        }
        Ok(pushed)
    }

    /// Stores a payload pushed by a peer proxy.
    pub fn handle_push(&self, req: Message) -> Result<Message, ProxyError> {
        let Header::TransferRequest { run_id, refs, .. } = req.header else {
            return Err(ProxyError::BadRequest("expected TransferRequest".into()));
        };
        let [ref_id] = refs.as_slice() else {
            return Err(ProxyError::BadRequest("a push carries exactly one reference".into()));
        };
        self.store.insert(ref_id, &run_id, req.payload).map_err(|e| ProxyError::WriteOnce(e.0))?;
        Ok(Message::control(Header::TransferAck { run_id, refs, pushed_payload_bytes: 0 }))
    }

    pub fn handle_materialize(&self, req: &Message) -> Result<Message, ProxyError> {
        let Header::MaterializeRequest { run_id, ref_id } = &req.header else {
            return Err(ProxyError::BadRequest("expected MaterializeRequest".into()));
        };
        let entry = self.store.get(ref_id).ok_or_else(|| ProxyError::ReferenceNotFound(ref_id.clone()))?;
        Ok(Message::with_payload(
            Header::MaterializeResponse { run_id: run_id.clone(), ref_id: ref_id.clone() },
            entry.payload.as_ref().clone(),
        ))
    }

    pub fn handle_flush(&self, req: &Message) -> Message {
        let run_id = req.header.run_id().to_string();
        let removed = self.store.flush(&run_id);
        debug!("proxy {} flushed {removed} entries of run {run_id}", self.site);
        Message::control(Header::FlushAck { run_id })
    }
}

enum PushError {
    Transport(TransportError),
    Rejected(ProxyError),
}

impl From<TransportError> for PushError {
    fn from(e: TransportError) -> Self {
        PushError::Transport(e)
    }
}

/// A proxy accepting connections on its own thread; each connection is
/// served on its own thread, requests answered in order.
pub struct ProxyServer {
    proxy: Arc<Proxy>,
    addr: std::net::SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl ProxyServer {
    pub fn spawn(proxy: Arc<Proxy>, listener: TcpListener) -> std::io::Result<Self> {
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let accept = {
            let (proxy, stop) = (proxy.clone(), stop.clone());
            std::thread::Builder::new()
                .name(format!("proxy-{}", proxy.site))
                .spawn(move || accept_loop(proxy, listener, stop))?
        };
        Ok(ProxyServer { proxy, addr, stop, accept: Some(accept) })
    }

    pub fn proxy(&self) -> &Arc<Proxy> {
        &self.proxy
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop exits.
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ProxyServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn accept_loop(proxy: Arc<Proxy>, listener: TcpListener, stop: Arc<AtomicBool>) {
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        match conn {
            Ok(stream) => {
                let proxy = proxy.clone();
                std::thread::spawn(move || serve_connection(proxy, stream));
            }
            Err(e) => warn!("proxy {} accept failed: {e}", proxy.site),
        }
    }
}

fn serve_connection(proxy: Arc<Proxy>, stream: TcpStream) {
    let mut ch = Channel::from_stream(stream, proxy.topology.clone(), &proxy.site, ENGINE_SITE);
    loop {
        let msg = match ch.recv() {
            Ok((msg, _)) => msg,
            Err(TransportError::Io(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => return,
            Err(e) => {
                debug!("proxy {} dropping connection: {e}", proxy.site);
                return;
            }
        };
        let (reply, to) = proxy.handle(msg);
        ch.set_remote(&to);
        if let Err(e) = ch.send(&reply) {
            debug!("proxy {} reply to {to} failed: {e}", proxy.site);
            return;
        }
    }
}

/// One proxy per topology site, all served from this process. Sites whose
/// address has port 0 bind an ephemeral port; the cluster's topology holds
/// the addresses actually bound.
pub struct Cluster {
    topology: Arc<Topology>,
    servers: Vec<ProxyServer>,
}

impl Cluster {
    pub fn launch(topology: &Topology, services: ServiceRegistry) -> Result<Self, TransportError> {
        let mut bound = topology.clone();
        let mut listeners = Vec::new();
        for site in topology.sites() {
            let listener = TcpListener::bind(&site.addr)?;
            bound.set_addr(&site.id, listener.local_addr()?.to_string())?;
            listeners.push((site.id.clone(), listener));
        }
        let topology = Arc::new(bound);
        let mut servers = Vec::new();
        for (site, listener) in listeners {
            let proxy = Arc::new(Proxy::new(&site, topology.clone(), services.clone())?);
            servers.push(ProxyServer::spawn(proxy, listener)?);
        }
        Ok(Cluster { topology, servers })
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn proxy(&self, site: &str) -> Option<&Arc<Proxy>> {
        self.servers.iter().map(ProxyServer::proxy).find(|p| p.site == site)
    }

    pub fn proxies(&self) -> impl Iterator<Item = &Arc<Proxy>> {
        self.servers.iter().map(ProxyServer::proxy)
    }
}
