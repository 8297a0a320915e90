//! Scripted chat-completion backends: an in-process transport and a local
//! HTTP server speaking just enough HTTP/1.1 for the real client.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use sdgkit::llm::{ChatRequest, HttpReply, Transport};

pub type Handler = dyn Fn(usize, &ChatRequest) -> (u16, String) + Send + Sync;

pub fn completion_body(content: &str) -> String {
    serde_json::json!({
        "id": "cmpl-test",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

/// Answers "SDG n" where n is derived from the prompt text, so different
/// inputs get different but reproducible answers.
pub fn echo_sdg(_: usize, req: &ChatRequest) -> (u16, String) {
    let prompt = &req.messages[0].content;
    let n = prompt.bytes().fold(7u32, |a, b| a.wrapping_mul(31).wrapping_add(b as u32)) % 17 + 1;
    (200, completion_body(&format!("This supports SDG {n}. However, SDG {} is not addressed.", n % 17 + 1)))
}

pub struct ScriptedTransport {
    pub calls: AtomicUsize,
    handler: Box<Handler>,
}

impl ScriptedTransport {
    pub fn new(handler: impl Fn(usize, &ChatRequest) -> (u16, String) + Send + Sync + 'static) -> Self {
        ScriptedTransport {
            calls: AtomicUsize::new(0),
            handler: Box::new(handler),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for ScriptedTransport {
    fn post_json(&self, body: &str) -> Result<HttpReply, String> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let req: ChatRequest = serde_json::from_str(body).map_err(|e| e.to_string())?;
        let (status, body) = (self.handler)(n, &req);
        Ok(HttpReply { status, body })
    }
}

pub struct MockServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
    pub in_flight_max: Arc<AtomicUsize>,
}

/// Serves `handler` on an ephemeral localhost port until the process exits.
/// Each request also records the Authorization header check in the status:
/// a missing `Bearer` token yields 401.
pub fn serve(handler: impl Fn(usize, &ChatRequest) -> (u16, String) + Send + Sync + 'static, delay_ms: u64) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let in_flight = Arc::new(AtomicUsize::new(0));
    let in_flight_max = Arc::new(AtomicUsize::new(0));
    let handler: Arc<Handler> = Arc::new(handler);
    {
        let requests = requests.clone();
        let in_flight_max = in_flight_max.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (handler, requests, in_flight, in_flight_max) =
                    (handler.clone(), requests.clone(), in_flight.clone(), in_flight_max.clone());
                thread::spawn(move || {
                    let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                    in_flight_max.fetch_max(now, Ordering::SeqCst);
                    let n = requests.fetch_add(1, Ordering::SeqCst);
                    if delay_ms > 0 {
                        thread::sleep(std::time::Duration::from_millis(delay_ms));
                    }
                    let _ = handle(stream, n, &*handler);
                    in_flight.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
    }
    MockServer {
        url,
        requests,
        in_flight_max,
    }
}

fn handle(stream: TcpStream, n: usize, handler: &Handler) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut length = 0usize;
    let mut authorized = false;
    let mut line = String::new();
    reader.read_line(&mut line)?;
    loop {
        line.clear();
        reader.read_line(&mut line)?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        let lower = trimmed.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            length = v.trim().parse().unwrap_or(0);
        }
        if lower.starts_with("authorization: bearer ") {
            authorized = true;
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    let (status, reply) = if !authorized {
        (401, r#"{"error":{"message":"invalid api key"}}"#.to_string())
    } else {
        match serde_json::from_slice::<ChatRequest>(&body) {
            Ok(req) => handler(n, &req),
            Err(e) => (400, format!("{{\"error\":\"{e}\"}}")),
        }
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )?;
    stream.flush()
}
