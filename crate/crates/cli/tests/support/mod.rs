#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// The CLI binary with a clean endpoint environment.
pub fn anchorlab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_anchorlab"));
    c.env_remove("ANCHORLAB_LLM_URL").env_remove("ANCHORLAB_LLM_KEY").env("RUST_LOG", "warn");
    c
}

pub fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed with {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[derive(Debug, Clone)]
pub struct Seen {
    pub path: String,
    pub authorization: Option<String>,
    pub body: Value,
}

/// A loopback HTTP server that records every JSON request and answers with
/// whatever `respond` returns.
pub struct MockServer {
    pub base: String,
    pub seen: Arc<Mutex<Vec<Seen>>>,
}

impl MockServer {
    pub fn start<F>(respond: F) -> MockServer
    where
        F: Fn(&Seen) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let base = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        let respond = Arc::new(respond);
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let log = Arc::clone(&log);
                let respond = Arc::clone(&respond);
                thread::spawn(move || {
                    let _ = serve(stream, &log, respond.as_ref());
                });
            }
        });
        MockServer { base, seen }
    }

    pub fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, log: &Mutex<Vec<Seen>>, respond: &dyn Fn(&Seen) -> (u16, String)) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let (mut length, mut chunked, mut authorization) = (0usize, false, None);
    loop {
        line.clear();
        reader.read_line(&mut line)?;
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            let v = v.trim();
            match k.to_ascii_lowercase().as_str() {
                "content-length" => length = v.parse().unwrap_or(0),
                "transfer-encoding" => chunked = v.eq_ignore_ascii_case("chunked"),
                "authorization" => authorization = Some(v.to_string()),
                _ => {}
            }
        }
    }
    let mut body = Vec::new();
    if chunked {
        loop {
            line.clear();
            reader.read_line(&mut line)?;
            let n = usize::from_str_radix(line.trim(), 16).unwrap_or(0);
            let mut chunk = vec![0; n + 2];
            reader.read_exact(&mut chunk)?;
            if n == 0 {
                break;
            }
            body.extend_from_slice(&chunk[..n]);
        }
    } else {
        body.resize(length, 0);
        reader.read_exact(&mut body)?;
    }
    let seen = Seen {
        path,
        authorization,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    };
    let (status, reply) = respond(&seen);
    log.lock().unwrap().push(seen);
    let mut w = stream;
    write!(
        w,
        "HTTP/1.1 {status} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )?;
    w.flush()
}

/// Runs the toy decoded anchors through `reconstruct --remote` against a mock
/// that replays the recorded chat response. Returns the records and the
/// requests the mock saw.
pub fn remote_reconstruct(dir: &Path, penalty_rejected: bool) -> (Vec<Value>, Vec<Seen>, Output) {
    let canned = std::fs::read_to_string(fixture("mock_chat_response.json")).unwrap();
    let server = MockServer::start(move |req| {
        if penalty_rejected && req.body.get("repetition_penalty").is_some() {
            (400, r#"{"error":{"message":"unknown field repetition_penalty"}}"#.into())
        } else {
            (200, canned.clone())
        }
    });
    let out = anchorlab()
        .env("ANCHORLAB_LLM_URL", format!("{}/v1/chat/completions", server.base))
        .env("ANCHORLAB_LLM_KEY", "test-key")
        .arg("--out")
        .arg(dir)
        .args(["reconstruct", "--remote", "--mode", "naive", "--concurrency", "2"])
        .arg("--dataset")
        .arg(fixture("toy.jsonl"))
        .arg("--decoded")
        .arg(fixture("toy_decoded.jsonl"))
        .output()
        .unwrap();
    let records = std::fs::read_to_string(dir.join("records_naive.jsonl"))
        .unwrap_or_default()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    (records, server.requests(), out)
}
