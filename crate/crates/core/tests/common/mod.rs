#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;

#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    pub target: String,
    pub body: String,
}

#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn ok(body: impl Into<String>) -> Self {
        Self { status: 200, body: body.into() }
    }

    pub fn status(status: u16, body: impl Into<String>) -> Self {
        Self { status, body: body.into() }
    }
}

/// Minimal HTTP/1.1 server on a loopback port. Replies are served in order;
/// the last one repeats once the list is exhausted.
pub struct StubServer {
    pub url: String,
    requests: Arc<Mutex<Vec<Request>>>,
}

impl StubServer {
    pub fn start(replies: Vec<Reply>) -> Self {
        assert!(!replies.is_empty());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&requests);
        thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    continue;
                }
                let mut parts = line.split_whitespace();
                let method = parts.next().unwrap_or_default().to_string();
                let target = parts.next().unwrap_or_default().to_string();
                let mut length = 0usize;
                loop {
                    let mut header = String::new();
                    if reader.read_line(&mut header).unwrap_or(0) == 0 || header == "\r\n" {
                        break;
                    }
                    if let Some((name, value)) = header.split_once(':') {
                        if name.eq_ignore_ascii_case("content-length") {
                            length = value.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0u8; length];
                let _ = reader.read_exact(&mut body);
                seen.lock().unwrap().push(Request { method, target, body: String::from_utf8_lossy(&body).into() });
                let reply = &replies[i.min(replies.len() - 1)];
                let response = format!(
                    "HTTP/1.1 {} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    reply.status,
                    reply.body.len(),
                    reply.body
                );
                let _ = stream.write_all(response.as_bytes());
                let _ = stream.flush();
            }
        });
        Self { url, requests }
    }

    pub fn requests(&self) -> Vec<Request> {
        self.requests.lock().unwrap().clone()
    }
}

pub fn sample_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../sample")
}

pub const TAXONOMY_2: &str = r#"{
  "nodes": [
    {"id": 1, "label": "wire", "instruction": "Write like a wire service."},
    {"id": 2, "label": "local", "instruction": "Write like a local station."}
  ],
  "domain_map": [{"pattern": "local.example", "node": 2}],
  "fallback_node": 1
}"#;

/// Writes a config, taxonomy and CSV input into `dir` and returns the config path.
pub fn write_project(dir: &Path, taxonomy: &str, csv: &str, extra: serde_json::Value) -> PathBuf {
    std::fs::write(dir.join("taxonomy.json"), taxonomy).unwrap();
    std::fs::write(dir.join("articles.csv"), csv).unwrap();
    let mut config = serde_json::json!({
        "paths": {"input": "articles.csv", "taxonomy": "taxonomy.json", "work_dir": "out"},
        "run_count": 2
    });
    merge(&mut config, extra);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn merge(base: &mut serde_json::Value, extra: serde_json::Value) {
    match (base, extra) {
        (serde_json::Value::Object(b), serde_json::Value::Object(e)) => {
            for (k, v) in e {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, e) => *b = e,
    }
}

/// CSV rows for two outlets; `rows` gives (hours after origin, domain, title).
pub fn csv_rows(rows: &[(f64, &str, &str)]) -> String {
    let origin = chrono::DateTime::parse_from_rfc3339("2026-03-01T00:00:00Z").unwrap();
    let mut out = String::from("timestamp,domain,title,url,language\n");
    for (i, (h, domain, title)) in rows.iter().enumerate() {
        let ts = origin + chrono::Duration::milliseconds((h * 3_600_000.0).round() as i64);
        out.push_str(&format!(
            "{},{domain},{title},https://{domain}/a{i},English\n",
            ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        ));
    }
    out
}
