//! Framed JSON-header codec.
//!
//! A frame is a 4-byte big-endian length `N` followed by `N` bytes: the
//! compact JSON header, a single `0x0A`, then the raw payload (possibly
//! empty). Compact JSON never contains a raw newline, so the first `0x0A`
//! always terminates the header.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::TransportError;
use crate::workflow::DataReference;

const SEPARATOR: u8 = 0x0A;
/// Largest frame body accepted from the wire.
pub const MAX_FRAME_LEN: usize = 1 << 30;

/// Input descriptor of an invoke request. Literal bodies are concatenated
/// into the frame payload in input order; `len` delimits each one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireInput {
    Ref {
        #[serde(rename = "ref")]
        reference: DataReference,
    },
    Literal {
        literal: bool,
        len: u64,
    },
}

impl WireInput {
    pub fn literal(len: usize) -> Self {
        WireInput::Literal { literal: true, len: len as u64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "msg_type", deny_unknown_fields)]
pub enum Header {
    InvokeRequest {
        run_id: String,
        task_id: String,
        service_op: String,
        inputs: Vec<WireInput>,
        return_payload: bool,
    },
    InvokeResponse {
        run_id: String,
        task_id: String,
        #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
        reference: Option<DataReference>,
    },
    /// From the engine: push `refs` to `target_site`. From a peer proxy
    /// (`source_site` set): the payload of the single named ref.
    TransferRequest {
        run_id: String,
        refs: Vec<String>,
        target_site: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source_site: Option<String>,
    },
    TransferAck {
        run_id: String,
        refs: Vec<String>,
        #[serde(default)]
        pushed_payload_bytes: u64,
    },
    MaterializeRequest {
        run_id: String,
        ref_id: String,
    },
    MaterializeResponse {
        run_id: String,
        ref_id: String,
    },
    FlushRequest {
        run_id: String,
    },
    FlushAck {
        run_id: String,
    },
    Error {
        run_id: String,
        code: String,
        detail: String,
    },
}

impl Header {
    pub fn msg_type(&self) -> &'static str {
        match self {
            Header::InvokeRequest { .. } => "InvokeRequest",
            Header::InvokeResponse { .. } => "InvokeResponse",
            Header::TransferRequest { .. } => "TransferRequest",
            Header::TransferAck { .. } => "TransferAck",
            Header::MaterializeRequest { .. } => "MaterializeRequest",
            Header::MaterializeResponse { .. } => "MaterializeResponse",
            Header::FlushRequest { .. } => "FlushRequest",
            Header::FlushAck { .. } => "FlushAck",
            Header::Error { .. } => "Error",
        }
    }

    pub fn run_id(&self) -> &str {
        match self {
            Header::InvokeRequest { run_id, .. }
            | Header::InvokeResponse { run_id, .. }
            | Header::TransferRequest { run_id, .. }
            | Header::TransferAck { run_id, .. }
            | Header::MaterializeRequest { run_id, .. }
            | Header::MaterializeResponse { run_id, .. }
            | Header::FlushRequest { run_id }
            | Header::FlushAck { run_id }
            | Header::Error { run_id, .. } => run_id,
        }
    }

    pub fn may_carry_payload(&self) -> bool {
        matches!(
            self,
            Header::InvokeRequest { .. }
                | Header::InvokeResponse { .. }
                | Header::TransferRequest { .. }
                | Header::MaterializeResponse { .. }
        )
    }

    pub fn error(run_id: impl Into<String>, code: impl Into<String>, detail: impl Into<String>) -> Self {
        Header::Error { run_id: run_id.into(), code: code.into(), detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub header: Header,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn control(header: Header) -> Self {
        Message { header, payload: Vec::new() }
    }

    pub fn with_payload(header: Header, payload: Vec<u8>) -> Self {
        Message { header, payload }
    }

    fn check(&self) -> Result<(), TransportError> {
        if !self.payload.is_empty() && !self.header.may_carry_payload() {
            return Err(TransportError::PayloadOnControlMessage(self.header.msg_type()));
        }
        Ok(())
    }
}

pub fn encode(msg: &Message) -> Result<Vec<u8>, TransportError> {
    msg.check()?;
    let header = serde_json::to_vec(&msg.header).expect("header serializes");
    let body_len = header.len() + 1 + msg.payload.len();
    if body_len > MAX_FRAME_LEN {
        return Err(TransportError::FrameTooLarge(body_len));
    }
    let mut frame = Vec::with_capacity(4 + body_len);
    frame.extend_from_slice(&(body_len as u32).to_be_bytes());
    frame.extend_from_slice(&header);
    frame.push(SEPARATOR);
    frame.extend_from_slice(&msg.payload);
    Ok(frame)
}

/// Decodes exactly one complete frame.
pub fn decode(bytes: &[u8]) -> Result<Message, TransportError> {
    if bytes.len() < 4 {
        return Err(TransportError::TruncatedFrame { declared: 4, available: bytes.len() });
    }
    let declared = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    let available = bytes.len() - 4;
    if declared > available {
        return Err(TransportError::TruncatedFrame { declared, available });
    }
    if declared < available {
        return Err(TransportError::TrailingBytes(available - declared));
    }
    decode_body(bytes[4..].to_vec())
}

fn decode_body(mut body: Vec<u8>) -> Result<Message, TransportError> {
    let sep = body
        .iter()
        .position(|b| *b == SEPARATOR)
        .ok_or_else(|| TransportError::BadHeader("missing header separator".into()))?;
    let header: Header = serde_json::from_slice(&body[..sep]).map_err(|e| TransportError::BadHeader(e.to_string()))?;
    let payload = body.split_off(sep + 1);
    let msg = Message { header, payload };
    msg.check()?;
    Ok(msg)
}

/// Writes one frame, returning its total length on the wire.
pub fn write_frame(w: &mut impl Write, msg: &Message) -> Result<usize, TransportError> {
    let frame = encode(msg)?;
    w.write_all(&frame)?;
    w.flush()?;
    Ok(frame.len())
}

/// Reads one frame, returning the message and its total length on the wire.
pub fn read_frame(r: &mut impl Read) -> Result<(Message, usize), TransportError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let declared = u32::from_be_bytes(len) as usize;
    if declared > MAX_FRAME_LEN {
        return Err(TransportError::FrameTooLarge(declared));
    }
    let mut body = vec![0u8; declared];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => TransportError::TruncatedFrame { declared, available: 0 },
        _ => TransportError::Io(e),
    })?;
    Ok((decode_body(body)?, 4 + declared))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_of(frame: &[u8]) -> &str {
        let end = frame.iter().skip(4).position(|b| *b == b'\n').unwrap() + 4;
        std::str::from_utf8(&frame[4..end]).unwrap()
    }

    #[test]
    fn flush_request_header_is_schema_exact() {
        let frame = encode(&Message::control(Header::FlushRequest { run_id: "r1".into() })).unwrap();
        assert_eq!(header_of(&frame), r#"{"msg_type":"FlushRequest","run_id":"r1"}"#);
        assert_eq!(*frame.last().unwrap(), b'\n');
        assert_eq!(frame.len(), 4 + header_of(&frame).len() + 1);
    }

    #[test]
    fn invoke_response_frame_length_counts_payload() {
        let msg = Message::with_payload(
            Header::InvokeResponse { run_id: "r1".into(), task_id: "t".into(), reference: None },
            b"abc".to_vec(),
        );
        let frame = encode(&msg).unwrap();
        let header_len = serde_json::to_vec(&msg.header).unwrap().len();
        let declared = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
        assert_eq!(declared, header_len + 1 + 3);
        assert_eq!(frame.len(), 4 + declared);
        assert_eq!(&frame[frame.len() - 3..], b"abc");
    }

    #[test]
    fn payload_on_control_message_rejected() {
        let msg = Message::with_payload(
            Header::TransferAck { run_id: "r".into(), refs: vec![], pushed_payload_bytes: 0 },
            vec![1],
        );
        assert!(matches!(encode(&msg), Err(TransportError::PayloadOnControlMessage("TransferAck"))));
    }

    #[test]
    fn truncated_frame() {
        let mut frame = encode(&Message::control(Header::FlushAck { run_id: "r".into() })).unwrap();
        frame.pop();
        assert!(matches!(decode(&frame), Err(TransportError::TruncatedFrame { .. })));
        assert!(matches!(decode(&frame[..2]), Err(TransportError::TruncatedFrame { .. })));
    }

    #[test]
    fn unknown_msg_type_is_bad_header() {
        let body = b"{\"msg_type\":\"Nope\"}\n";
        let mut frame = (body.len() as u32).to_be_bytes().to_vec();
        frame.extend_from_slice(body);
        assert!(matches!(decode(&frame), Err(TransportError::BadHeader(_))));
    }

    #[test]
    fn invoke_request_inputs_wire_shape() {
        let r = DataReference::for_payload("11111111-2222-3333-4444-555555555555", "A", b"x");
        let h = Header::InvokeRequest {
            run_id: "r".into(),
            task_id: "t".into(),
            service_op: "echo".into(),
            inputs: vec![WireInput::Ref { reference: r.clone() }, WireInput::literal(3)],
            return_payload: false,
        };
        let json = serde_json::to_value(&h).unwrap();
        assert_eq!(json["inputs"][0]["ref"]["proxy_site"], "A");
        assert_eq!(json["inputs"][1], serde_json::json!({"literal": true, "len": 3}));
        let frame = encode(&Message::with_payload(h.clone(), b"abc".to_vec())).unwrap();
        assert_eq!(decode(&frame).unwrap().header, h);
    }

    #[test]
    fn stream_read_write() {
        let a = Message::control(Header::MaterializeRequest { run_id: "r".into(), ref_id: "x".into() });
        let b =
            Message::with_payload(Header::MaterializeResponse { run_id: "r".into(), ref_id: "x".into() }, vec![0; 10]);
        let mut buf = Vec::new();
        let la = write_frame(&mut buf, &a).unwrap();
        let lb = write_frame(&mut buf, &b).unwrap();
        assert_eq!(buf.len(), la + lb);
        let mut cur = std::io::Cursor::new(buf);
        assert_eq!(read_frame(&mut cur).unwrap(), (a, la));
        assert_eq!(read_frame(&mut cur).unwrap(), (b, lb));
    }
}
