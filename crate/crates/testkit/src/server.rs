//! A loopback HTTP server speaking just enough of the chat-completions and
//! embeddings wire formats for end-to-end tests.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::{json, Value};

use crate::responder::FixtureResponder;

type Handler = dyn Fn(&str, &Value) -> (u16, Value) + Send + Sync;

struct Shared {
    handler: Box<Handler>,
    requests: AtomicUsize,
    failures_left: AtomicUsize,
    stop: AtomicBool,
}

/// Serves requests on `127.0.0.1` until dropped.
pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Serves `handler(path, json_body) -> (status, json_reply)`.
    pub fn start(handler: impl Fn(&str, &Value) -> (u16, Value) + Send + Sync + 'static) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0", handler)
    }

    pub fn bind(
        addr: &str,
        handler: impl Fn(&str, &Value) -> (u16, Value) + Send + Sync + 'static,
    ) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            handler: Box::new(handler),
            requests: AtomicUsize::new(0),
            failures_left: AtomicUsize::new(0),
            stop: AtomicBool::new(false),
        });
        let worker = shared.clone();
        let thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if worker.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let worker = worker.clone();
                std::thread::spawn(move || {
                    let _ = serve(stream, &worker);
                });
            }
        });
        Ok(Self { addr, shared, thread: Some(thread) })
    }

    /// A gateway answering `/chat/completions` from `responder` and
    /// `/embeddings` with `embedding_dim`-wide hashed bag-of-words vectors.
    pub fn gateway(responder: FixtureResponder, embedding_dim: usize) -> std::io::Result<Self> {
        Self::start(gateway_handler(responder, embedding_dim))
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Requests received so far, failed ones included.
    pub fn requests(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }

    /// Answers the next `n` requests with HTTP 500.
    pub fn fail_next(&self, n: usize) {
        self.shared.failures_left.store(n, Ordering::SeqCst);
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn gateway_handler(responder: FixtureResponder, embedding_dim: usize) -> impl Fn(&str, &Value) -> (u16, Value) {
    move |path, body| {
        if path.ends_with("/chat/completions") {
            let Some(messages) = body.get("messages").and_then(Value::as_array) else {
                return (400, json!({"error": "missing messages"}));
            };
            let conv: Vec<(String, String)> = messages
                .iter()
                .map(|m| {
                    let field = |k: &str| m.get(k).and_then(Value::as_str).unwrap_or_default().to_owned();
                    (field("role"), field("content"))
                })
                .collect();
            let text = responder.reply(&conv);
            let prompt_chars: usize = conv.iter().map(|(_, c)| c.len()).sum();
            (
                200,
                json!({
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
                    "usage": {"prompt_tokens": prompt_chars.div_ceil(4), "completion_tokens": text.len().div_ceil(4)},
                }),
            )
        } else if path.ends_with("/embeddings") {
            match body.get("input").and_then(Value::as_str) {
                Some(text) => (200, json!({ "embedding": hashed_embedding(text, embedding_dim) })),
                None => (400, json!({"error": "missing input"})),
            }
        } else {
            (404, json!({"error": format!("no route for {path}")}))
        }
    }
}

/// FNV-1a bucket counts over lowercase alphanumeric words.
pub fn hashed_embedding(text: &str, dim: usize) -> Vec<f32> {
    let dim = dim.max(1);
    let mut v = vec![0f32; dim];
    for word in text.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()) {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in word.to_ascii_lowercase().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        v[(h % dim as u64) as usize] += 1.0;
    }
    v
}

fn serve(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_owned();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line.trim_end().is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    if shared.stop.load(Ordering::SeqCst) {
        return Ok(());
    }
    shared.requests.fetch_add(1, Ordering::SeqCst);

    let failing = shared
        .failures_left
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok();
    let (status, reply) = if failing {
        (500, json!({"error": "injected failure"}))
    } else {
        match serde_json::from_slice::<Value>(&body) {
            Ok(v) => (shared.handler)(&path, &v),
            Err(e) => (400, json!({"error": e.to_string()})),
        }
    };
    let payload = reply.to_string();
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        _ => "Error",
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    out.flush()
}
