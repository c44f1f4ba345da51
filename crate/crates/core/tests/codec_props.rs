mod common;

use std::io::Cursor;

use circulate::transport::{
    decode, encode, link_delay, read_frame, write_frame, Header, Message, Topology, TransportError,
};
use common::message;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn decode_inverts_encode(msg in message()) {
        let frame = encode(&msg).unwrap();
        prop_assert_eq!(decode(&frame).unwrap(), msg);
    }
}

proptest! {
    #[test]
    fn frames_stream_back_to_back(msgs in proptest::collection::vec(message(), 1..4)) {
        let mut buf = Vec::new();
        let lens: Vec<usize> = msgs.iter().map(|m| write_frame(&mut buf, m).unwrap()).collect();
        prop_assert_eq!(lens.iter().sum::<usize>(), buf.len());
        let mut cur = Cursor::new(buf);
        for (m, len) in msgs.iter().zip(lens) {
            let (back, n) = read_frame(&mut cur).unwrap();
            prop_assert_eq!(&back, m);
            prop_assert_eq!(n, len);
        }
    }

    #[test]
    fn every_strict_prefix_is_rejected(msg in message(), cut in any::<prop::sample::Index>()) {
        let frame = encode(&msg).unwrap();
        let cut = cut.index(frame.len());
        prop_assert!(decode(&frame[..cut]).is_err());
    }

    #[test]
    fn link_delay_grows_with_size(lat in 0.0..200.0f64, mbit in 0.5..1000.0f64, a in 0u64..50_000_000, b in 0u64..50_000_000) {
        let t = Topology::uniform(&["A", "B"], lat, mbit);
        let (small, large) = (a.min(b), a.max(b));
        let d_small = link_delay(&t, "A", "B", small).unwrap();
        let d_large = link_delay(&t, "A", "B", large).unwrap();
        prop_assert!(d_small <= d_large);
        let expected = lat / 1000.0 + large as f64 / (mbit * 1e6 / 8.0);
        prop_assert!((d_large.as_secs_f64() - expected).abs() < 1e-6);
        prop_assert_eq!(link_delay(&t, "A", "A", large).unwrap().as_nanos(), 0);
    }
}

#[test]
fn control_messages_refuse_payloads() {
    let msg = Message::with_payload(Header::FlushRequest { run_id: "r".into() }, vec![1]);
    assert!(matches!(encode(&msg), Err(TransportError::PayloadOnControlMessage("FlushRequest"))));
}

#[test]
fn header_without_separator_is_bad() {
    let header = br#"{"msg_type":"FlushAck","run_id":"r"}"#;
    let mut frame = (header.len() as u32).to_be_bytes().to_vec();
    frame.extend_from_slice(header);
    assert!(matches!(decode(&frame), Err(TransportError::BadHeader(_))));
}

#[test]
fn declared_length_beyond_input_is_truncation() {
    let frame = encode(&Message::control(Header::FlushAck { run_id: "r".into() })).unwrap();
    let mut longer = frame.clone();
    longer[3] += 5;
    assert!(matches!(decode(&longer), Err(TransportError::TruncatedFrame { .. })));
}
