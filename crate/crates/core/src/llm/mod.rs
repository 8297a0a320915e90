//! Chat-completion prompt protocols, a replayable response cache and SDG
//! label extraction from free-text answers.

mod client;
mod parse;
mod protocol;

pub use client::{
    chat_complete, extract_content, ChatMessage, ChatRequest, Completion, HttpReply, HttpTransport, RetryPolicy,
    Role, Transport, API_KEY_VARS, DEFAULT_ENDPOINT,
};
pub use parse::{is_na, parse_sdg_labels, parse_sdg_response, strip_however, ParsedLabels};
pub use protocol::{
    estimate_tokens, inputs_from_corpus, run_protocol, Cleaning, Exchange, FewShotExample, LlmRecord,
    ProtocolInput, ProtocolKind, ProtocolSpec, RateLimiter, ResponseCache, RunOptions, RunSummary,
    DEFAULT_MODEL, DEFAULT_TOKEN_BUDGET, EXPERIMENT1_STEP1, EXPERIMENT1_STEP2, EXPERIMENT2_PROMPT,
    FEWSHOT_TEMPLATE,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("no API key: set one of {API_KEY_VARS:?}")]
    MissingApiKey,
    #[error("authentication failed (HTTP {0})")]
    AuthFailed(u16),
    #[error("rate limited after {retries} retries")]
    RateLimited { retries: u32 },
    #[error("transport failed: {0}")]
    TransportFailed(String),
    #[error("malformed response: missing field `{0}`")]
    MalformedResponse(String),
    #[error("prompt needs about {needed} tokens, budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("not in cache (replay mode): {0}")]
    ReplayMiss(String),
    #[error("cache {path}, line {line}: {message}")]
    CacheParse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LlmError {
    /// True for failures of the remote service or the network, as opposed
    /// to configuration or input problems.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            LlmError::AuthFailed(_)
                | LlmError::RateLimited { .. }
                | LlmError::TransportFailed(_)
                | LlmError::MalformedResponse(_)
                | LlmError::MissingApiKey
        )
    }
}

pub type Result<T, E = LlmError> = std::result::Result<T, E>;
