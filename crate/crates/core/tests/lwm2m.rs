use std::net::SocketAddr;
use std::sync::atomic::{AtomicI32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use iat_core::annotation::{parse_component_source, SourceUnit};
use iat_core::coap::{Code, Endpoint, EndpointHandle, TransmissionParams};
use iat_core::lwm2m::*;
use iat_core::resource::{
    build_resource_model, to_link_format, InstanceType, ObjectDefn, Operations, ResourceDefn,
    ResourcePath, ThingResourceModel, ValueType,
};
use proptest::prelude::*;
use tokio::time::timeout;

fn silo_model() -> ThingResourceModel {
    let src = include_str!("../corpus/silo.c");
    build_resource_model(&parse_component_source(&SourceUnit::new("silo.c", src)).unwrap()).unwrap()
}

fn silo_registry() -> ObjectRegistry {
    let mut r = ObjectRegistry::new(silo_model());
    for (o, i) in [(1663, 0), (1664, 0), (1664, 1), (1665, 0), (1665, 1)] {
        r.add_instance(o, i).unwrap();
    }
    r
}

fn segs(p: &ResourcePath) -> Vec<String> {
    p.segments()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Method {
    Get,
    Observe,
    PutGood,
    PutBad,
    Post,
    Delete,
}

/// Expected response code from the definition alone.
fn oracle(m: Method, d: Option<&ResourceDefn>, hook_rc: i32) -> Code {
    let Some(d) = d else { return Code::NOT_FOUND };
    let ops = d.operations;
    match m {
        Method::Get if ops.read => Code::CONTENT,
        Method::Observe if ops.read && d.observable => Code::CONTENT,
        Method::PutGood if ops.write => Code::CHANGED,
        Method::PutBad if ops.write => Code::BAD_REQUEST,
        Method::Post if ops.execute && hook_rc == 0 => Code::CHANGED,
        Method::Post if ops.execute => Code::INTERNAL_SERVER_ERROR,
        _ => Code::METHOD_NOT_ALLOWED,
    }
}

fn good_payload(vt: ValueType) -> &'static [u8] {
    match vt {
        ValueType::Integer => b"60",
        ValueType::Boolean => b"1",
        _ => b"abc",
    }
}

fn bad_payload(vt: ValueType) -> Option<&'static [u8]> {
    match vt {
        ValueType::Integer | ValueType::Boolean => Some(b"abc"),
        ValueType::Text => Some(&[0xff, 0xfe]),
        _ => None,
    }
}

#[test]
fn code_table_is_exhaustively_determined() {
    let model = silo_model();
    for rc in [0, 1] {
        let mut reg = silo_registry();
        let outcome = Arc::new(AtomicI32::new(rc));
        for (o, i) in reg.instances() {
            for r in &model.object(o).unwrap().resources {
                if r.operations.execute {
                    let out = outcome.clone();
                    reg.on_execute(
                        &ResourcePath::resource(o, i, r.resource_id),
                        Arc::new(move |_| out.load(Ordering::SeqCst)),
                    )
                    .unwrap();
                }
            }
        }
        let mut paths: Vec<ResourcePath> = Vec::new();
        for (o, i) in reg.instances() {
            for r in &model.object(o).unwrap().resources {
                paths.push(ResourcePath::resource(o, i, r.resource_id));
            }
            paths.push(ResourcePath::resource(o, i, 4242));
        }
        paths.push(ResourcePath::resource(9, 0, 0));
        paths.push(ResourcePath::resource(1663, 1, 0));
        for p in paths {
            let d = model.resource(p.object_id, p.resource_id.unwrap())
                .filter(|_| reg.instances().contains(&(p.object_id, p.instance_id.unwrap())))
                .cloned();
            for m in [Method::Get, Method::Observe, Method::PutGood, Method::PutBad, Method::Post, Method::Delete] {
                let vt = d.as_ref().map_or(ValueType::Text, |d| d.value_type);
                let (code, payload, observe) = match m {
                    Method::Get => (Code::GET, b"".as_slice(), None),
                    Method::Observe => (Code::GET, b"".as_slice(), Some(0)),
                    Method::PutGood => (Code::PUT, good_payload(vt), None),
                    Method::PutBad => match bad_payload(vt) {
                        Some(b) => (Code::PUT, b, None),
                        None => continue,
                    },
                    Method::Post => (Code::POST, b"".as_slice(), None),
                    Method::Delete => (Code::DELETE, b"".as_slice(), None),
                };
                let reply = reg.handle(code, &segs(&p), payload, observe);
                assert_eq!(reply.code, oracle(m, d.as_ref(), rc), "{m:?} {p} rc={rc}");
            }
        }
    }
}

#[test]
fn published_examples() {
    let mut reg = silo_registry();
    reg.on_read(
        &ResourcePath::resource(1663, 0, 0),
        Arc::new(|| ResourceValue::Text("IDLE".into())),
    )
    .unwrap();
    let get = |reg: &mut ObjectRegistry, p: &str| {
        let p: ResourcePath = p.parse().unwrap();
        reg.handle(Code::GET, &p.segments(), b"", None)
    };
    let r = get(&mut reg, "/1663/0/0");
    assert_eq!((r.code, r.payload.as_slice()), (Code::CONTENT, b"IDLE".as_slice()));
    assert_eq!(get(&mut reg, "/1663/0/1").code, Code::METHOD_NOT_ALLOWED);
    assert_eq!(get(&mut reg, "/9/0/0").code, Code::NOT_FOUND);
    let p11 = ResourcePath::resource(1663, 0, 11);
    assert_eq!(reg.handle(Code::PUT, &p11.segments(), b"60", None).code, Code::CHANGED);
    assert_eq!(reg.read(&p11).unwrap(), ResourceValue::Integer(60));
    assert_eq!(reg.handle(Code::PUT, &p11.segments(), b"abc", None).code, Code::BAD_REQUEST);
    let p0 = ResourcePath::resource(1663, 0, 0);
    assert_eq!(reg.handle(Code::PUT, &p0.segments(), b"x", None).code, Code::METHOD_NOT_ALLOWED);
    let p7 = ResourcePath::resource(1663, 0, 7);
    assert_eq!(reg.handle(Code::POST, &p7.segments(), b"", None).code, Code::METHOD_NOT_ALLOWED);
    // state is not observable in the corpus
    assert_eq!(reg.handle(Code::GET, &p0.segments(), b"", Some(0)).code, Code::METHOD_NOT_ALLOWED);
    let obs = reg.handle(Code::GET, &p7.segments(), b"", Some(0));
    assert_eq!(obs.code, Code::CONTENT);
    assert!(obs.observable);
}

#[test]
fn discovery() {
    let mut reg = silo_registry();
    let model = silo_model();
    let root = reg.handle(Code::GET, &[], b"", None);
    let expected = to_link_format(&model, &reg.instances()).unwrap();
    assert_eq!(String::from_utf8(root.payload).unwrap(), expected);
    let wk = reg.handle(Code::GET, &[".well-known".into(), "core".into()], b"", None);
    assert_eq!(String::from_utf8(wk.payload).unwrap(), expected);
    let valves = reg.handle(Code::GET, &["1664".into()], b"", None);
    assert_eq!(String::from_utf8(valves.payload).unwrap(), "</1664/0>,</1664/1>");
    assert_eq!(reg.handle(Code::GET, &["77".into()], b"", None).code, Code::NOT_FOUND);
    let inst = reg.discover(&ResourcePath::instance(1663, 0)).unwrap();
    assert!(inst.starts_with("</1663/0/0>,</1663/0/1>"));
    assert!(inst.contains("</1663/0/7>;obs"));
    assert_eq!(reg.handle(Code::GET, &["abc".into()], b"", None).code, Code::NOT_FOUND);
    assert_eq!(reg.handle(Code::PUT, &["1664".into()], b"", None).code, Code::METHOD_NOT_ALLOWED);
}

#[test]
fn instance_rules() {
    let mut reg = ObjectRegistry::new(silo_model());
    assert!(reg.add_instance(1663, 1).is_err());
    assert_eq!(reg.add_instance(9, 0), Err(Lwm2mError::NotFound));
    assert!(reg.add_instance(1664, 3).is_ok());
}

fn writable_model() -> ThingResourceModel {
    let res = |id, vt, observable| ResourceDefn {
        resource_id: id,
        name: format!("r{id}"),
        operations: Operations::RW,
        value_type: vt,
        observable,
        extended: false,
        source_member: format!("r{id}"),
    };
    ThingResourceModel {
        thing_name: "t".into(),
        objects: vec![ObjectDefn {
            object_id: 3300,
            name: "T".into(),
            instance_type: InstanceType::Single,
            mandatory: true,
            resources: vec![
                res(0, ValueType::Integer, true),
                res(1, ValueType::Text, false),
                res(2, ValueType::Boolean, true),
                res(3, ValueType::Opaque, false),
            ],
        }],
    }
}

fn value() -> impl Strategy<Value = (u16, ResourceValue)> {
    prop_oneof![
        any::<i64>().prop_map(|n| (0, ResourceValue::Integer(n))),
        "[ -~]{0,40}".prop_map(|s| (1, ResourceValue::Text(s))),
        any::<bool>().prop_map(|b| (2, ResourceValue::Boolean(b))),
        prop::collection::vec(any::<u8>(), 0..40).prop_map(|b| (3, ResourceValue::Opaque(b))),
    ]
}

proptest! {
    #[test]
    fn read_your_writes(writes in prop::collection::vec(value(), 1..20)) {
        let mut reg = ObjectRegistry::new(writable_model());
        reg.add_instance(3300, 0).unwrap();
        for (rid, v) in writes {
            let p = ResourcePath::resource(3300, 0, rid);
            let reply = reg.handle(Code::PUT, &p.segments(), &v.to_payload(), None);
            prop_assert_eq!(reply.code, Code::CHANGED);
            // notification requested exactly for observable resources
            prop_assert_eq!(reply.notify.len(), usize::from(rid == 0 || rid == 2));
            let back = reg.handle(Code::GET, &p.segments(), b"", None);
            prop_assert_eq!(back.payload, v.to_payload());
            prop_assert_eq!(reg.read(&p).unwrap(), v);
        }
    }
}

fn fast() -> TransmissionParams {
    TransmissionParams {
        ack_timeout: Duration::from_millis(100),
        backoff_factor: 2,
        max_retransmit: 2,
        exchange_lifetime: Duration::from_secs(5),
    }
}

fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

async fn thing(model: ThingResourceModel, instances: &[(u16, u16)]) -> (EndpointHandle, SharedRegistry) {
    let mut reg = ObjectRegistry::new(model);
    for (o, i) in instances {
        reg.add_instance(*o, *i).unwrap();
    }
    let reg = Arc::new(Mutex::new(reg));
    let ep = Endpoint::bind(local(), fast(), Some(Box::new(ClientService::new(reg.clone()))))
        .await
        .unwrap();
    (ep, reg)
}

async fn directory() -> (EndpointHandle, Arc<Mutex<Directory>>) {
    let dir = Arc::new(Mutex::new(Directory::new()));
    let ep = Endpoint::bind(local(), fast(), Some(Box::new(DirectoryService::new(dir.clone()))))
        .await
        .unwrap();
    (ep, dir)
}

#[tokio::test]
async fn registration_end_to_end() {
    let (rd, dir) = directory().await;
    let (t1, reg1) = thing(silo_model(), &[(1663, 0), (1664, 0), (1664, 1)]).await;
    let (t2, _) = thing(silo_model(), &[(1663, 0)]).await;
    let links = reg1.lock().unwrap().link_format();
    let r1 = Registrar::new(t1.clone(), rd.local_addr(), "silo1", 300, links.clone());
    let r2 = Registrar::new(t2.clone(), rd.local_addr(), "silo2", 300, "</1663/0>");
    let loc1 = r1.register().await.unwrap();
    let loc2 = r2.register().await.unwrap();
    assert_ne!(loc1, loc2);
    assert!(loc1.starts_with("/rd/"));

    let server = Endpoint::bind(local(), fast(), None).await.unwrap();
    let listing = server.call(rd.local_addr(), Code::GET, "/rd", Vec::new()).await.unwrap();
    let text = listing.payload_text();
    assert!(text.contains("ep=\"silo1\"") && text.contains("ep=\"silo2\""), "{text}");
    let entry = server.call(rd.local_addr(), Code::GET, &loc1, Vec::new()).await.unwrap();
    assert_eq!(entry.payload_text(), links);

    // server side access by endpoint name, at the address the Thing registered from
    let sc = ServerClient::new(server.clone(), dir.clone());
    assert_eq!(sc.address("silo1").unwrap(), t1.local_addr());
    assert_eq!(sc.discover("silo1", None).await.unwrap(), links);
    assert_eq!(
        sc.discover("silo1", Some(&ResourcePath::object(1664))).await.unwrap(),
        "</1664/0>,</1664/1>"
    );
    sc.write("silo1", &ResourcePath::resource(1663, 0, 11), "55").await.unwrap();
    assert_eq!(sc.read("silo1", &ResourcePath::resource(1663, 0, 11)).await.unwrap(), "55");
    let err = sc.read("silo1", &ResourcePath::resource(1663, 0, 1)).await.unwrap_err();
    assert!(matches!(err, ServerError::Status { code, .. } if code == Code::METHOD_NOT_ALLOWED));
    assert!(matches!(sc.read("nobody", &ResourcePath::resource(1, 0, 0)).await, Err(ServerError::UnknownEndpoint(_))));

    r1.update().await.unwrap();
    r2.deregister().await.unwrap();
    assert!(dir.lock().unwrap().lookup("silo2").is_none());
    assert_eq!(dir.lock().unwrap().len(), 1);
    let gone = server.call(rd.local_addr(), Code::DELETE, &loc2, Vec::new()).await.unwrap();
    assert_eq!(gone.code, Code::NOT_FOUND);
}

#[tokio::test]
async fn registration_rejects_bad_requests() {
    let (rd, _) = directory().await;
    let c = Endpoint::bind(local(), fast(), None).await.unwrap();
    let no_ep = c.call(rd.local_addr(), Code::POST, "/rd?lt=5", Vec::new()).await.unwrap();
    assert_eq!(no_ep.code, Code::BAD_REQUEST);
    let bad_links = c.call(rd.local_addr(), Code::POST, "/rd?ep=x", b"1663/0".to_vec()).await.unwrap();
    assert_eq!(bad_links.code, Code::BAD_REQUEST);
    let unknown = c.call(rd.local_addr(), Code::POST, "/rd/99", Vec::new()).await.unwrap();
    assert_eq!(unknown.code, Code::NOT_FOUND);
    let other = c.call(rd.local_addr(), Code::GET, "/nothing", Vec::new()).await.unwrap();
    assert_eq!(other.code, Code::NOT_FOUND);
    let put = c.call(rd.local_addr(), Code::PUT, "/rd", Vec::new()).await.unwrap();
    assert_eq!(put.code, Code::METHOD_NOT_ALLOWED);
}

#[tokio::test]
async fn expired_registration_is_evicted_within_grace() {
    let (rd, dir) = directory().await;
    let (t, _) = thing(silo_model(), &[(1663, 0)]).await;
    let r = Registrar::new(t, rd.local_addr(), "silo1", 1, "</1663/0>");
    let loc = r.register().await.unwrap();
    tokio::time::sleep(Duration::from_millis(2000)).await;
    assert!(dir.lock().unwrap().lookup("silo1").is_none());
    let c = Endpoint::bind(local(), fast(), None).await.unwrap();
    let listing = c.call(rd.local_addr(), Code::GET, "/rd", Vec::new()).await.unwrap();
    assert!(!listing.payload_text().contains("silo1"));
    let upd = c.call(rd.local_addr(), Code::POST, &loc, Vec::new()).await.unwrap();
    assert_eq!(upd.code, Code::NOT_FOUND);
    // the registrar notices and registers again
    r.update().await.unwrap();
    assert!(dir.lock().unwrap().lookup("silo1").is_some());
}

#[tokio::test]
async fn keepalive_holds_registration() {
    let (rd, dir) = directory().await;
    let (t, _) = thing(silo_model(), &[(1663, 0)]).await;
    let r = Arc::new(Registrar::new(t, rd.local_addr(), "silo1", 1, "</1663/0>"));
    r.register().await.unwrap();
    let task = r.clone().spawn_keepalive(Duration::from_millis(300));
    tokio::time::sleep(Duration::from_millis(2200)).await;
    assert!(dir.lock().unwrap().lookup("silo1").is_some());
    task.abort();
    assert_eq!(r.update_period(), Duration::from_secs(1));
}

#[tokio::test]
async fn write_notifies_observers_over_coap() {
    let (t, _) = thing(writable_model(), &[(3300, 0)]).await;
    let dir = Arc::new(Mutex::new(Directory::new()));
    dir.lock()
        .unwrap()
        .register("t", t.local_addr(), "</3300/0>", 300, tokio::time::Instant::now())
        .unwrap();
    let server = Endpoint::bind(local(), fast(), None).await.unwrap();
    let sc = ServerClient::new(server, dir);
    let p0 = ResourcePath::resource(3300, 0, 0);
    let (initial, _tok, mut rx) = sc.observe("t", &p0).await.unwrap();
    assert_eq!(initial, "0");
    // non-observable resource refuses observation
    assert!(sc.observe("t", &ResourcePath::resource(3300, 0, 1)).await.is_err());
    sc.write("t", &p0, "7").await.unwrap();
    sc.write("t", &ResourcePath::resource(3300, 0, 1), "quiet").await.unwrap();
    sc.write("t", &p0, "8").await.unwrap();
    let a = timeout(Duration::from_secs(1), rx.recv()).await.unwrap().unwrap();
    let b = timeout(Duration::from_secs(1), rx.recv()).await.unwrap().unwrap();
    assert_eq!((a.payload_text(), a.observe()), ("7".into(), Some(1)));
    assert_eq!((b.payload_text(), b.observe()), ("8".into(), Some(2)));
    assert!(timeout(Duration::from_millis(100), rx.recv()).await.is_err());
    // zero observers: nothing sent, no error
    assert_eq!(t.notify("/3300/0/2", "1", None).await.unwrap(), 0);
}
