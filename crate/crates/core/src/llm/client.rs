use std::io::Read;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{LlmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// Body of a chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    pub messages: Vec<ChatMessage>,
}

/// Raw outcome of one HTTP exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// One POST of a JSON body. `Err` means no HTTP status was obtained
/// (connection refused, timeout, ...); such failures are retried.
pub trait Transport: Send + Sync {
    fn post_json(&self, body: &str) -> std::result::Result<HttpReply, String>;
}

/// Environment variables consulted for the API key, in order.
pub const API_KEY_VARS: [&str; 2] = ["SDGKIT_API_KEY", "OPENAI_API_KEY"];
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

pub struct HttpTransport {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        HttpTransport {
            endpoint: endpoint.into(),
            api_key,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    /// Reads the key from [`API_KEY_VARS`]; fails when none is set.
    pub fn from_env(endpoint: impl Into<String>, timeout: Duration) -> Result<Self> {
        let key = API_KEY_VARS
            .iter()
            .find_map(|v| std::env::var(v).ok().filter(|k| !k.is_empty()))
            .ok_or(LlmError::MissingApiKey)?;
        Ok(Self::new(endpoint, Some(key), timeout))
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

fn read_body(resp: ureq::Response) -> String {
    let mut body = String::new();
    let _ = resp.into_reader().take(16 << 20).read_to_string(&mut body);
    body
}

impl Transport for HttpTransport {
    fn post_json(&self, body: &str) -> std::result::Result<HttpReply, String> {
        let mut req = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_string(body) {
            Ok(resp) => Ok(HttpReply {
                status: resp.status(),
                body: read_body(resp),
            }),
            Err(ureq::Error::Status(status, resp)) => Ok(HttpReply {
                status,
                body: read_body(resp),
            }),
            Err(ureq::Error::Transport(t)) => Err(t.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `attempt` (0-based): base * 2^attempt, capped.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.min(40)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub content: String,
    pub retries: u32,
}

/// Pulls `choices[0].message.content` out of a response body.
pub fn extract_content(body: &str) -> Result<String> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|_| LlmError::MalformedResponse("<body is not JSON>".into()))?;
    let missing = |f: &str| LlmError::MalformedResponse(f.to_string());
    let choices = value.get("choices").ok_or_else(|| missing("choices"))?;
    let first = choices.get(0).ok_or_else(|| missing("choices[0]"))?;
    let message = first.get("message").ok_or_else(|| missing("choices[0].message"))?;
    message
        .get("content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| missing("choices[0].message.content"))
}

/// Classifies a reply: `Ok(Some)` success, `Ok(None)` retryable, `Err` fatal.
fn interpret(reply: &HttpReply) -> Result<Option<String>> {
    match reply.status {
        200..=299 => extract_content(&reply.body).map(Some),
        401 | 403 => Err(LlmError::AuthFailed(reply.status)),
        408 | 429 | 500..=599 => Ok(None),
        s => Err(LlmError::TransportFailed(format!("HTTP {s}: {}", snippet(&reply.body)))),
    }
}

fn snippet(body: &str) -> &str {
    match body.char_indices().nth(200) {
        Some((i, _)) => &body[..i],
        None => body,
    }
}

/// Sends `request`, retrying rate limits, server errors and network
/// failures with exponential backoff. `before_attempt` runs ahead of every
/// attempt (used for rate limiting).
pub fn chat_complete(
    transport: &dyn Transport,
    request: &ChatRequest,
    policy: &RetryPolicy,
    before_attempt: &dyn Fn(),
) -> Result<Completion> {
    if request.messages.iter().any(|m| m.role == Role::User && m.content.trim().is_empty()) {
        return Err(LlmError::InvalidProtocol("empty user message".into()));
    }
    let body = serde_json::to_string(request).expect("request serializes");
    let mut attempt = 0;
    loop {
        before_attempt();
        let last = match transport.post_json(&body) {
            Ok(reply) => match interpret(&reply)? {
                Some(content) => {
                    return Ok(Completion {
                        content,
                        retries: attempt,
                    })
                }
                None if reply.status == 429 => LlmError::RateLimited { retries: attempt },
                None => LlmError::TransportFailed(format!("HTTP {}: {}", reply.status, snippet(&reply.body))),
            },
            Err(e) => LlmError::TransportFailed(e),
        };
        if attempt >= policy.max_retries {
            log::warn!("giving up after {attempt} retries: {last}");
            return Err(last);
        }
        log::debug!("retrying after: {last}");
        thread::sleep(policy.delay(attempt));
        attempt += 1;
    }
}
