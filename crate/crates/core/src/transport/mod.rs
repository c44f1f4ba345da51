//! Engine↔proxy and proxy↔proxy messaging over a simulated multi-site
//! network.

mod codec;
mod net;
mod topology;

pub use codec::{decode, encode, read_frame, write_frame, Header, Message, WireInput, MAX_FRAME_LEN};
pub use net::Channel;
pub use topology::{link_delay, SiteAddr, Topology, ENGINE_SITE};

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("{0} must not carry a payload")]
    PayloadOnControlMessage(&'static str),
    #[error("truncated frame: declared {declared} bytes, {available} available")]
    TruncatedFrame { declared: usize, available: usize },
    #[error("{0} bytes after the end of the frame")]
    TrailingBytes(usize),
    #[error("frame of {0} bytes exceeds the maximum")]
    FrameTooLarge(usize),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("unknown site {0}")]
    UnknownSite(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
