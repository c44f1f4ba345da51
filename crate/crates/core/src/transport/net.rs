//! TCP channels that charge the simulated link cost before every send.

use std::net::TcpStream;
use std::sync::Arc;
use std::time::Duration;

use super::codec::{encode, read_frame, Message};
use super::topology::{link_delay, Topology};
use super::TransportError;

/// One end of a connection between two sites. Sends sleep for
/// [`link_delay`] of the full frame before writing; delivery on a channel
/// is FIFO.
pub struct Channel {
    stream: TcpStream,
    local: String,
    remote: String,
    topology: Arc<Topology>,
}

impl Channel {
    pub fn connect(topology: Arc<Topology>, local: &str, remote: &str) -> Result<Self, TransportError> {
        let addr = topology.addr(remote)?;
        let stream = TcpStream::connect(addr)?;
        Ok(Channel::from_stream(stream, topology, local, remote))
    }

    pub fn from_stream(stream: TcpStream, topology: Arc<Topology>, local: &str, remote: &str) -> Self {
        let _ = stream.set_nodelay(true);
        Channel { stream, local: local.to_string(), remote: remote.to_string(), topology }
    }

    pub fn remote(&self) -> &str {
        &self.remote
    }

    /// Re-targets the delay model, e.g. once a server learns who connected.
    pub fn set_remote(&mut self, remote: &str) {
        self.remote = remote.to_string();
    }

    pub fn set_read_timeout(&self, timeout: Option<Duration>) -> Result<(), TransportError> {
        self.stream.set_read_timeout(timeout)?;
        Ok(())
    }

    /// Returns the frame length written.
    pub fn send(&mut self, msg: &Message) -> Result<usize, TransportError> {
        use std::io::Write;
        let frame = encode(msg)?;
        let delay = link_delay(&self.topology, &self.local, &self.remote, frame.len() as u64)?;
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
        self.stream.write_all(&frame)?;
        self.stream.flush()?;
        Ok(frame.len())
    }

    /// Returns the message and its frame length.
    pub fn recv(&mut self) -> Result<(Message, usize), TransportError> {
        read_frame(&mut self.stream)
    }
}
