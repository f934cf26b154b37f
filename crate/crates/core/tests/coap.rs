use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use coap_lite::{CoapOption, MessageClass, Packet};
use iat_core::coap::*;
use proptest::prelude::*;
use tokio::net::UdpSocket;
use tokio::time::{timeout, Instant};

fn lite_type(t: MessageType) -> coap_lite::MessageType {
    match t {
        MessageType::Con => coap_lite::MessageType::Confirmable,
        MessageType::Non => coap_lite::MessageType::NonConfirmable,
        MessageType::Ack => coap_lite::MessageType::Acknowledgement,
        MessageType::Rst => coap_lite::MessageType::Reset,
    }
}

fn to_lite(m: &CoapMessage) -> Packet {
    let mut p = Packet::new();
    p.header.set_version(1);
    p.header.set_type(lite_type(m.mtype));
    p.header.code = MessageClass::from(m.code.byte());
    p.header.message_id = m.message_id;
    p.set_token(m.token.clone());
    for (n, v) in &m.options {
        p.add_option(CoapOption::from(*n), v.clone());
    }
    p.payload = m.payload.clone();
    p
}

fn lite_options(p: &Packet) -> Vec<(u16, Vec<u8>)> {
    p.options()
        .flat_map(|(n, vs)| vs.iter().map(move |v| (*n, v.clone())))
        .collect()
}

#[test]
fn published_vectors_agree_with_dissector() {
    let get = CoapMessage {
        message_id: 0x1234,
        ..CoapMessage::request(MessageType::Con, Code::GET, "/1663/0/0").with_token(&[0xc1])
    };
    let expected = [
        0x41, 0x01, 0x12, 0x34, 0xc1, 0xb4, 0x31, 0x36, 0x36, 0x33, 0x01, 0x30, 0x01, 0x30,
    ];
    assert_eq!(encode(&get).unwrap(), expected);
    assert_eq!(to_lite(&get).to_bytes().unwrap(), expected);
    let parsed = Packet::from_bytes(&expected).unwrap();
    assert_eq!(parsed.header.message_id, 0x1234);
    assert_eq!(parsed.get_token(), &[0xc1]);
    assert_eq!(lite_options(&parsed), get.options);

    let ack = CoapMessage::empty_ack(7);
    assert_eq!(encode(&ack).unwrap(), [0x60, 0x00, 0x00, 0x07]);
    assert_eq!(to_lite(&ack).to_bytes().unwrap(), [0x60, 0x00, 0x00, 0x07]);
}

#[test]
fn trailing_marker() {
    let frame = [0x40, 0x01, 0x00, 0x01, 0xff];
    assert_eq!(decode(&frame), Err(CoapError::PayloadMarkerWithoutPayload));
    // The dissector is lenient here and reports an empty payload, which is
    // exactly the case the marker rule forbids.
    assert!(Packet::from_bytes(&frame).unwrap().payload.is_empty());
}

fn message() -> impl Strategy<Value = CoapMessage> {
    let mtype = prop_oneof![
        Just(MessageType::Con),
        Just(MessageType::Non),
        Just(MessageType::Ack),
        Just(MessageType::Rst)
    ];
    let code = prop_oneof![
        Just(Code::GET),
        Just(Code::POST),
        Just(Code::PUT),
        Just(Code::DELETE),
        Just(Code::CREATED),
        Just(Code::CHANGED),
        Just(Code::CONTENT),
        Just(Code::BAD_REQUEST),
        Just(Code::NOT_FOUND),
        Just(Code::METHOD_NOT_ALLOWED),
    ];
    let opt = (
        prop_oneof![Just(6u16), Just(11u16), Just(12u16)],
        prop::collection::vec(any::<u8>(), 0..300),
    );
    (
        mtype,
        code,
        any::<u16>(),
        prop::collection::vec(any::<u8>(), 0..=8),
        prop::collection::vec(opt, 0..5),
        prop::collection::vec(any::<u8>(), 0..=1024),
    )
        .prop_map(|(mtype, code, mid, token, mut options, payload)| {
            options.sort_by_key(|(n, _)| *n);
            CoapMessage {
                mtype,
                code,
                message_id: mid,
                token,
                options,
                payload,
            }
        })
}

proptest! {
    #[test]
    fn roundtrip_and_dissector_agreement(m in message()) {
        let bytes = encode(&m).unwrap();
        prop_assert_eq!(decode(&bytes).unwrap(), m.clone());
        let lite = Packet::from_bytes(&bytes).unwrap();
        prop_assert_eq!(lite.header.message_id, m.message_id);
        prop_assert_eq!(lite.get_token(), m.token.as_slice());
        prop_assert_eq!(u8::from(lite.header.code), m.code.byte());
        prop_assert_eq!(lite_options(&lite), m.options.clone());
        prop_assert_eq!(&lite.payload, &m.payload);
        prop_assert_eq!(to_lite(&m).to_bytes_unlimited().unwrap(), bytes);
    }

    #[test]
    fn deltas_reconstruct_numbers(mut nums in prop::collection::vec(0u16..2000, 0..12)) {
        nums.sort();
        let mut m = CoapMessage::new(MessageType::Non, Code::GET, 1);
        for n in &nums {
            m.options.push((*n, vec![1]));
        }
        let back = decode(&encode(&m).unwrap()).unwrap();
        let got: Vec<u16> = back.options.iter().map(|(n, _)| *n).collect();
        prop_assert_eq!(got, nums);
    }

    #[test]
    fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = decode(&bytes);
    }
}

fn fast() -> TransmissionParams {
    TransmissionParams {
        ack_timeout: Duration::from_millis(50),
        backoff_factor: 2,
        max_retransmit: 2,
        exchange_lifetime: Duration::from_secs(5),
    }
}

fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

struct Counter {
    hits: Arc<AtomicUsize>,
}

impl Service for Counter {
    fn handle(&mut self, _peer: SocketAddr, req: &CoapMessage, _ctx: &mut ServiceCtx) -> Response {
        self.hits.fetch_add(1, Ordering::SeqCst);
        match req.path_string().as_str() {
            "/1663/0/0" => Response::content("IDLE", content_format::TEXT_PLAIN),
            "/obs" => Response::content("0", content_format::TEXT_PLAIN).observable(),
            "/big" => Response::content(vec![b'x'; 2000], content_format::TEXT_PLAIN),
            _ => Response::new(Code::NOT_FOUND),
        }
    }
}

async fn server() -> (EndpointHandle, Arc<AtomicUsize>) {
    let hits = Arc::new(AtomicUsize::new(0));
    let ep = Endpoint::bind(local(), fast(), Some(Box::new(Counter { hits: hits.clone() })))
        .await
        .unwrap();
    (ep, hits)
}

async fn client() -> EndpointHandle {
    Endpoint::bind(local(), fast(), None).await.unwrap()
}

async fn recv(sock: &UdpSocket) -> (CoapMessage, SocketAddr) {
    let mut buf = [0u8; 2048];
    let (n, from) = timeout(Duration::from_secs(2), sock.recv_from(&mut buf))
        .await
        .expect("datagram")
        .unwrap();
    (decode(&buf[..n]).unwrap(), from)
}

#[tokio::test]
async fn get_state_from_live_endpoint() {
    let (srv, _) = server().await;
    let cli = client().await;
    let resp = cli
        .call(srv.local_addr(), Code::GET, "/1663/0/0", Vec::new())
        .await
        .unwrap();
    assert_eq!(resp.code, Code::CONTENT);
    assert_eq!(resp.mtype, MessageType::Ack);
    assert_eq!(resp.payload_text(), "IDLE");
    assert_eq!(resp.content_format(), Some(content_format::TEXT_PLAIN));
    let missing = cli.call(srv.local_addr(), Code::GET, "/9/9/9", Vec::new()).await.unwrap();
    assert_eq!(missing.code, Code::NOT_FOUND);
    // response too large for the payload cap
    let big = cli.call(srv.local_addr(), Code::GET, "/big", Vec::new()).await.unwrap();
    assert_eq!(big.code, Code::INTERNAL_SERVER_ERROR);
}

#[tokio::test]
async fn non_request_gets_non_response() {
    let (srv, _) = server().await;
    let cli = client().await;
    let req = CoapMessage::request(MessageType::Non, Code::GET, "/1663/0/0");
    let resp = cli.request(srv.local_addr(), req).await.unwrap();
    assert_eq!(resp.mtype, MessageType::Non);
    assert_eq!(resp.payload_text(), "IDLE");
}

#[tokio::test]
async fn timeout_follows_backoff_schedule() {
    let silent = UdpSocket::bind(local()).await.unwrap();
    let cli = client().await;
    let started = Instant::now();
    let dest = silent.local_addr().unwrap();
    let call = tokio::spawn({
        let cli = cli.clone();
        async move { cli.call(dest, Code::GET, "/x", Vec::new()).await }
    });
    let mut arrivals = Vec::new();
    let mut buf = [0u8; 512];
    while let Ok(Ok((n, _))) =
        timeout(Duration::from_millis(600), silent.recv_from(&mut buf)).await
    {
        arrivals.push((started.elapsed(), decode(&buf[..n]).unwrap().message_id));
    }
    let result = call.await.unwrap();
    assert_eq!(result, Err(CoapError::TransmissionTimeout));
    // one transmission plus max_retransmit retransmissions, same message id
    assert_eq!(arrivals.len(), 3);
    assert!(arrivals.iter().all(|(_, mid)| *mid == arrivals[0].1));
    // gaps of 50 ms then 100 ms
    let gap1 = arrivals[1].0 - arrivals[0].0;
    let gap2 = arrivals[2].0 - arrivals[1].0;
    assert!(gap1 >= Duration::from_millis(45) && gap1 < Duration::from_millis(150), "{gap1:?}");
    assert!(gap2 >= Duration::from_millis(95) && gap2 < Duration::from_millis(250), "{gap2:?}");
    assert_eq!(fast().max_transmit_wait(), Duration::from_millis(350));
    assert_eq!(TransmissionParams::default().max_transmit_wait(), Duration::from_secs(62));
}

#[tokio::test]
async fn unbound_port_times_out() {
    let port = {
        let s = std::net::UdpSocket::bind("127.0.0.1:0").unwrap();
        s.local_addr().unwrap()
    };
    let cli = client().await;
    let started = Instant::now();
    let r = cli.call(port, Code::GET, "/x", Vec::new()).await;
    assert_eq!(r, Err(CoapError::TransmissionTimeout));
    assert!(started.elapsed() >= Duration::from_millis(340));
}

#[tokio::test]
async fn duplicate_con_is_answered_from_cache() {
    let (srv, hits) = server().await;
    let raw = UdpSocket::bind(local()).await.unwrap();
    let req = CoapMessage {
        message_id: 4242,
        ..CoapMessage::request(MessageType::Con, Code::GET, "/1663/0/0").with_token(&[9, 9])
    };
    let bytes = encode(&req).unwrap();
    raw.send_to(&bytes, srv.local_addr()).await.unwrap();
    let (first, _) = recv(&raw).await;
    raw.send_to(&bytes, srv.local_addr()).await.unwrap();
    let (second, _) = recv(&raw).await;
    assert_eq!(first, second);
    assert_eq!(first.message_id, 4242);
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    // a new message id is a new request
    let again = CoapMessage { message_id: 4243, ..req };
    raw.send_to(&encode(&again).unwrap(), srv.local_addr()).await.unwrap();
    recv(&raw).await;
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn separate_response_is_acknowledged() {
    let raw = UdpSocket::bind(local()).await.unwrap();
    let dest = raw.local_addr().unwrap();
    let cli = client().await;
    let call = tokio::spawn({
        let cli = cli.clone();
        async move { cli.call(dest, Code::GET, "/slow", Vec::new()).await }
    });
    let (req, from) = recv(&raw).await;
    raw.send_to(&encode(&CoapMessage::empty_ack(req.message_id)).unwrap(), from)
        .await
        .unwrap();
    // well past the ack timeout: the client must not retransmit
    tokio::time::sleep(Duration::from_millis(200)).await;
    let resp = CoapMessage::new(MessageType::Con, Code::CONTENT, 777)
        .with_token(&req.token)
        .with_payload("late");
    raw.send_to(&encode(&resp).unwrap(), from).await.unwrap();
    let (ack, _) = recv(&raw).await;
    assert_eq!(ack.mtype, MessageType::Ack);
    assert_eq!(ack.code, Code::EMPTY);
    assert_eq!(ack.message_id, 777);
    let got = call.await.unwrap().unwrap();
    assert_eq!(got.payload_text(), "late");
}

#[tokio::test]
async fn reset_fails_request() {
    let raw = UdpSocket::bind(local()).await.unwrap();
    let dest = raw.local_addr().unwrap();
    let cli = client().await;
    let call = tokio::spawn({
        let cli = cli.clone();
        async move { cli.call(dest, Code::GET, "/x", Vec::new()).await }
    });
    let (req, from) = recv(&raw).await;
    raw.send_to(&encode(&CoapMessage::reset(req.message_id)).unwrap(), from)
        .await
        .unwrap();
    assert_eq!(call.await.unwrap(), Err(CoapError::ResetReceived));
}

#[tokio::test]
async fn critical_unknown_option_is_rejected() {
    let (srv, hits) = server().await;
    let cli = client().await;
    let req = CoapMessage::request(MessageType::Con, Code::GET, "/1663/0/0").with_option(2049, vec![1]);
    let resp = cli.request(srv.local_addr(), req).await.unwrap();
    assert_eq!(resp.code, Code::BAD_REQUEST);
    assert_eq!(hits.load(Ordering::SeqCst), 0);
    let req = CoapMessage::request(MessageType::Con, Code::GET, "/1663/0/0").with_option(2048, vec![1]);
    let resp = cli.request(srv.local_addr(), req).await.unwrap();
    assert_eq!(resp.code, Code::CONTENT);
}

#[tokio::test]
async fn observe_notifications_in_sequence() {
    let (srv, _) = server().await;
    let cli = client().await;
    let (first, mut rx) = cli.observe(srv.local_addr(), "/obs").await.unwrap();
    assert_eq!(first.observe(), Some(0));
    assert_eq!(srv.notify("/obs", "1", Some(0)).await.unwrap(), 1);
    assert_eq!(srv.notify("/obs", "2", Some(0)).await.unwrap(), 1);
    assert_eq!(srv.notify("/other", "x", None).await.unwrap(), 0);
    let a = timeout(Duration::from_secs(1), rx.recv()).await.unwrap().unwrap();
    let b = timeout(Duration::from_secs(1), rx.recv()).await.unwrap().unwrap();
    assert_eq!((a.observe(), a.payload_text()), (Some(1), "1".to_string()));
    assert_eq!((b.observe(), b.payload_text()), (Some(2), "2".to_string()));
    assert_eq!(a.token, first.token);
    assert_eq!(a.mtype, MessageType::Non);

    // the client forgets the observation; the next notification is reset
    cli.cancel_observe(&first.token);
    srv.notify("/obs", "3", None).await.unwrap();
    for _ in 0..50 {
        if srv.relations().await.unwrap().is_empty() {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert!(srv.relations().await.unwrap().is_empty());
}

#[tokio::test]
async fn non_observable_resource_does_not_register() {
    let (srv, _) = server().await;
    let cli = client().await;
    let (first, _rx) = cli.observe(srv.local_addr(), "/1663/0/0").await.unwrap();
    assert_eq!(first.observe(), None);
    assert!(srv.relations().await.unwrap().is_empty());
}

#[tokio::test]
async fn reset_observer_makes_relation_gone() {
    let (srv, _) = server().await;
    let raw = UdpSocket::bind(local()).await.unwrap();
    let observer = raw.local_addr().unwrap();
    let reg = CoapMessage {
        message_id: 1,
        ..CoapMessage::request(MessageType::Con, Code::GET, "/obs")
            .with_token(b"ob")
            .with_uint_option(option::OBSERVE, 0)
    };
    raw.send_to(&encode(&reg).unwrap(), srv.local_addr()).await.unwrap();
    recv(&raw).await;
    let n1 = srv.notify_relation(observer, b"ob", "1").await.unwrap();
    assert_eq!(n1.observe(), Some(1));
    let (got, _) = recv(&raw).await;
    assert_eq!(got.observe(), Some(1));
    raw.send_to(&encode(&CoapMessage::reset(got.message_id)).unwrap(), srv.local_addr())
        .await
        .unwrap();
    let mut result = Ok(n1);
    for _ in 0..50 {
        tokio::time::sleep(Duration::from_millis(10)).await;
        if srv.relations().await.unwrap().is_empty() {
            result = srv.notify_relation(observer, b"ob", "2").await;
            break;
        }
    }
    assert_eq!(result, Err(CoapError::RelationGone));
}

#[tokio::test]
async fn observe_cancel_with_observe_one() {
    let (srv, _) = server().await;
    let raw = UdpSocket::bind(local()).await.unwrap();
    for (mid, obs) in [(1u16, 0u32), (2, 1)] {
        let m = CoapMessage {
            message_id: mid,
            ..CoapMessage::request(MessageType::Con, Code::GET, "/obs")
                .with_token(b"ob")
                .with_uint_option(option::OBSERVE, obs)
        };
        raw.send_to(&encode(&m).unwrap(), srv.local_addr()).await.unwrap();
        recv(&raw).await;
        let expected = if obs == 0 { 1 } else { 0 };
        assert_eq!(srv.relations().await.unwrap().len(), expected);
    }
}

#[tokio::test]
async fn ping_gets_reset_and_shutdown_closes() {
    let (srv, _) = server().await;
    let raw = UdpSocket::bind(local()).await.unwrap();
    let ping = CoapMessage::new(MessageType::Con, Code::EMPTY, 55);
    raw.send_to(&encode(&ping).unwrap(), srv.local_addr()).await.unwrap();
    let (rst, _) = recv(&raw).await;
    assert_eq!((rst.mtype, rst.message_id), (MessageType::Rst, 55));
    srv.shutdown();
    tokio::time::sleep(Duration::from_millis(20)).await;
    assert!(srv.is_closed());
    assert_eq!(srv.notify("/obs", "x", None).await, Err(CoapError::EndpointClosed));
}
