//! Proxies: invoke colocated services, hold their outputs under references,
//! push payloads to peers when the engine says so, and serve final
//! results.

mod server;
mod store;

pub use server::{Cluster, Proxy, ProxyServer, RetryPolicy};
pub use store::{ProxyStore, StoredPayload, WriteOnceViolation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProxyError {
    #[error("reference {0} has not been staged at this proxy")]
    ReferenceNotStaged(String),
    #[error("no service operation named {0}")]
    UnknownServiceOp(String),
    #[error("service failed: {0}")]
    ServiceFailure(String),
    #[error("reference {0} not found")]
    ReferenceNotFound(String),
    #[error("target {site} unreachable: {detail}")]
    TargetUnreachable { site: String, detail: String },
    #[error("reference {0} already holds different bytes")]
    WriteOnce(String),
    #[error("stored bytes of {0} do not match its reference")]
    DigestMismatch(String),
    #[error("bad request: {0}")]
    BadRequest(String),
}

impl ProxyError {
    /// The `code` field of the wire `Error` message.
    pub fn code(&self) -> &'static str {
        match self {
            ProxyError::ReferenceNotStaged(_) => "ReferenceNotStaged",
            ProxyError::UnknownServiceOp(_) => "UnknownServiceOp",
            ProxyError::ServiceFailure(_) => "ServiceFailure",
            ProxyError::ReferenceNotFound(_) => "ReferenceNotFound",
            ProxyError::TargetUnreachable { .. } => "TargetUnreachable",
            ProxyError::WriteOnce(_) => "WriteOnceViolation",
            ProxyError::DigestMismatch(_) => "DigestMismatch",
            ProxyError::BadRequest(_) => "BadRequest",
        }
    }
}
