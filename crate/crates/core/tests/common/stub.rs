//! Minimal HTTP/1.1 server standing in for a chat-completion endpoint.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

pub enum Reply {
    /// 200 with the last message's content echoed back as the completion.
    Echo,
    Status(u16),
    Raw(u16, &'static str),
}

type Plan = dyn Fn(usize) -> Reply + Send + Sync;

struct Shared {
    plan: Box<Plan>,
    delay: Duration,
    hits: AtomicUsize,
    active: AtomicUsize,
    peak: AtomicUsize,
}

pub struct StubServer {
    pub base_url: String,
    shared: Arc<Shared>,
}

impl StubServer {
    /// `plan` maps the 0-based request number to a reply. Each request is held
    /// for `delay` before replying.
    pub fn start(plan: impl Fn(usize) -> Reply + Send + Sync + 'static, delay: Duration) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let shared = Arc::new(Shared {
            plan: Box::new(plan),
            delay,
            hits: AtomicUsize::new(0),
            active: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let s = Arc::clone(&shared);
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let s = Arc::clone(&s);
                std::thread::spawn(move || serve(stream, &s));
            }
        });
        Self { base_url, shared }
    }

    pub fn hits(&self) -> usize {
        self.shared.hits.load(Ordering::SeqCst)
    }

    /// Most requests observed in flight at once.
    pub fn peak_concurrency(&self) -> usize {
        self.shared.peak.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, s: &Shared) {
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    loop {
        let mut length = 0usize;
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        loop {
            line.clear();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let header = line.trim_end();
            if header.is_empty() {
                break;
            }
            if let Some((name, value)) = header.split_once(':') {
                if name.eq_ignore_ascii_case("content-length") {
                    length = value.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0; length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let n = s.hits.fetch_add(1, Ordering::SeqCst);
        let now = s.active.fetch_add(1, Ordering::SeqCst) + 1;
        s.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(s.delay);
        s.active.fetch_sub(1, Ordering::SeqCst);

        let (status, payload) = match (s.plan)(n) {
            Reply::Echo => {
                let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let content = req["messages"].as_array().unwrap().last().unwrap()["content"].clone();
                let v = serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]});
                (200, v.to_string())
            }
            Reply::Status(code) => (code, r#"{"error":"stub"}"#.to_string()),
            Reply::Raw(code, text) => (code, text.to_string()),
        };
        let head = format!(
            "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
            payload.len()
        );
        if writer.write_all(head.as_bytes()).and_then(|_| writer.write_all(payload.as_bytes())).is_err() {
            return;
        }
    }
}
