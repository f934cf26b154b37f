use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, UdpSocket};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

const CORPUS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/corpus/silo.c");

fn iat() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iat"))
}

struct Killed(Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_udp() -> u16 {
    UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn free_tcp() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http(port: u16, method: &str, path: &str, body: &str) -> Option<(u16, Value)> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .ok()?;
    let mut text = String::new();
    s.read_to_string(&mut text).ok()?;
    let status = text.split_whitespace().nth(1)?.parse().ok()?;
    let (_, payload) = text.split_once("\r\n\r\n")?;
    Some((status, serde_json::from_str(payload).unwrap_or(Value::Null)))
}

fn wait_for<T>(limit: Duration, mut f: impl FnMut() -> Option<T>) -> T {
    let start = Instant::now();
    loop {
        if let Some(v) = f() {
            return v;
        }
        assert!(start.elapsed() < limit, "timed out");
        std::thread::sleep(Duration::from_millis(100));
    }
}

#[test]
fn transform_writes_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let o = iat().arg("transform").arg(CORPUS).arg("--out").arg(out.path()).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ls = |p: &Path| p.exists();
    assert!(ls(&out.path().join("thing.json")));
    assert!(ls(&out.path().join("transform-report.json")));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("transform-report.json")).unwrap()).unwrap();
    assert_eq!(report["rules"]["objects"], 3);
    let generated = std::fs::read_dir(out.path()).unwrap().count();
    assert!(generated >= 5, "{generated}");
}

#[test]
fn transform_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.c");
    std::fs::write(&bad, "/* @ResourceDef(id=1, operations=\"R\" */\nstruct x { int a; };\n").unwrap();
    let o = iat().arg("transform").arg(&bad).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.c:"));

    let o = iat().args(["transform", "/nonexistent/silo.c"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = iat().arg("transform").arg(CORPUS).args(["--template", "/nonexistent"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_emits_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let desc = dir.path().join("thing.json");
    let o = iat().arg("transform").arg(CORPUS).arg("--out").arg(dir.path()).output().unwrap();
    assert!(o.status.success());
    let port = free_udp();
    let child = iat()
        .args(["simulate", "--descriptor"])
        .arg(&desc)
        .args(["--name", "silo1", "--port", &port.to_string(), "--time-scale", "50", "--duration", "3"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut child = Killed(child);
    let mut err = BufReader::new(child.0.stderr.take().unwrap());
    let mut line = String::new();
    err.read_line(&mut line).unwrap();
    assert!(line.contains(&format!("silo1 listening on 127.0.0.1:{port}")), "{line}");

    // drive it over CoAP: initialize then fill
    let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
    sock.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    for (mid, rid) in [(1u16, b'4'), (2, b'1')] {
        let mut msg = vec![0x40, 0x02, (mid >> 8) as u8, mid as u8];
        msg.extend_from_slice(&[0xb4, b'1', b'6', b'6', b'3', 0x01, b'0', 0x01, rid]);
        sock.send_to(&msg, ("127.0.0.1", port)).unwrap();
        let mut buf = [0u8; 256];
        let (n, _) = sock.recv_from(&mut buf).unwrap();
        assert!(n >= 4);
        assert_eq!(buf[1], 0x44, "2.04 Changed");
    }
    let out = BufReader::new(child.0.stdout.take().unwrap());
    let records: Vec<Value> = out.lines().map(|l| serde_json::from_str(&l.unwrap()).unwrap()).collect();
    assert!(child.0.wait().unwrap().success());
    assert!(records.iter().all(|r| r["silo"] == "silo1" && r["seq"].is_u64()));
    let kinds: Vec<&str> = records.iter().map(|r| r["kind"].as_str().unwrap()).collect();
    for k in ["command", "transition", "actuation", "event", "completion"] {
        assert!(kinds.contains(&k), "{k}: {kinds:?}");
    }
    assert!(records.iter().any(|r| r["kind"] == "transition" && r["to"] == "FILLING"));
    assert!(records.iter().any(|r| r["kind"] == "completion" && r["path"] == "/1663/0/7"));
}

#[test]
fn serve_and_simulate_run_a_recipe() {
    let registry = free_udp();
    let http_port = free_tcp();
    let traces = tempfile::tempdir().unwrap();
    let _serve = Killed(
        iat()
            .args(["serve", "--registry", &format!("127.0.0.1:{registry}")])
            .args(["--http-port", &http_port.to_string(), "--http-bind", "127.0.0.1"])
            .arg("--trace-dir")
            .arg(traces.path())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    wait_for(Duration::from_secs(10), || http(http_port, "GET", "/api/runs", ""));
    let _sim = Killed(
        iat()
            .args(["simulate", "--server", &format!("127.0.0.1:{registry}"), "--time-scale", "100"])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    wait_for(Duration::from_secs(10), || {
        let (_, v) = http(http_port, "GET", "/api/plant", "")?;
        (v["things"].as_array()?.len() == 4).then_some(())
    });
    let (status, run) = http(http_port, "POST", "/api/recipes", r#"{"preset":"typeB"}"#).unwrap();
    assert_eq!(status, 201);
    let id = run["recipeId"].as_str().unwrap().to_string();
    let (status, _) = http(http_port, "POST", "/api/recipes", r#"{"preset":"typeB"}"#).unwrap();
    assert_eq!(status, 409);
    let done = wait_for(Duration::from_secs(60), || {
        let (_, v) = http(http_port, "GET", &format!("/api/runs/{id}"), "")?;
        (v["status"] != "running" && v["status"] != "pending").then_some(v)
    });
    assert_eq!(done["status"], "completed", "{done}");
    let trace = std::fs::read_to_string(traces.path().join(format!("{id}.jsonl"))).unwrap();
    assert!(trace.lines().count() > 10);
}
