//! Centralised control flow with distributed data flow.
//!
//! An orchestration engine drives a workflow by exchanging control messages
//! and data references with proxies colocated with each site's services.
//! Intermediate payloads move proxy-to-proxy on the engine's instruction and
//! never pass through the engine. A pure-orchestration mode, where every
//! payload round-trips through the engine, is kept as the baseline.

pub mod bench;
pub mod orchestrator;
pub mod proxy;
pub mod transport;
pub mod workflow;
pub mod workloads;
