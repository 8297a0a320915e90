use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::{chat_complete, ChatMessage, ChatRequest, RetryPolicy, Transport};
use super::parse::{parse_sdg_response, strip_however};
use super::{LlmError, Result};
use crate::corpus::{Corpus, SdgLabelSet};

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_TOKEN_BUDGET: usize = 4096;

pub const EXPERIMENT1_STEP1: &str = "Does this text indicate direct contribution to any SDGs? \
If no SDG is directly relevant, just say NA.\n\n{input}";
pub const EXPERIMENT1_STEP2: &str = "List the SDGs mentioned in this text before the word 'however'.\n\n{input}";
pub const EXPERIMENT2_PROMPT: &str = "Give a comma-delimited list of any SDG(s) this company's work \
contributes to. If no SDG is relevant just say NA.\n\n{input}";
pub const FEWSHOT_TEMPLATE: &str = "Tag the text with any of the following tags: {tags}. \
If no tag applies, just say NA.\n\n{examples}Text: {input}\nTags:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// Two chained prompts over a document: detection, then a cleanup pass.
    Experiment1,
    /// One prompt over a company name.
    Experiment2,
    /// Few-shot tagging restricted to a tag list.
    FewshotTag,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Experiment1 => "experiment1",
            ProtocolKind::Experiment2 => "experiment2",
            ProtocolKind::FewshotTag => "fewshot_tag",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "experiment1" | "exp1" => Ok(ProtocolKind::Experiment1),
            "experiment2" | "exp2" => Ok(ProtocolKind::Experiment2),
            "fewshot_tag" | "fewshot" => Ok(ProtocolKind::FewshotTag),
            other => Err(LlmError::InvalidProtocol(format!("unknown protocol kind `{other}`"))),
        }
    }
}

/// How the text that gets parsed is derived from the exchanges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cleaning {
    /// Parse the last response as is.
    #[default]
    None,
    /// Parse the part of the last response before "however".
    StripHowever,
}

impl Cleaning {
    pub fn apply(self, text: &str) -> &str {
        match self {
            Cleaning::None => text,
            Cleaning::StripHowever => strip_however(text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub text: String,
    pub labels: SdgLabelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    /// Templates with an `{input}` slot; step `i > 0` receives the response
    /// of step `i - 1`.
    pub prompts: Vec<String>,
    pub model: String,
    pub temperature: f64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub cleaning: Cleaning,
    #[serde(default)]
    pub examples: Vec<FewShotExample>,
    #[serde(default)]
    pub tags: SdgLabelSet,
    pub token_budget: usize,
}

impl ProtocolSpec {
    fn base(kind: ProtocolKind, prompts: &[&str], model: &str) -> Self {
        ProtocolSpec {
            kind,
            prompts: prompts.iter().map(|p| p.to_string()).collect(),
            model: model.to_string(),
            temperature: 0.0,
            max_tokens: None,
            cleaning: Cleaning::None,
            examples: Vec::new(),
            tags: SdgLabelSet::empty(),
            token_budget: DEFAULT_TOKEN_BUDGET,
        }
    }

    pub fn experiment1(model: &str) -> Self {
        Self::base(ProtocolKind::Experiment1, &[EXPERIMENT1_STEP1, EXPERIMENT1_STEP2], model)
    }

    /// Single-call variant of experiment 1: the cleanup prompt is replaced
    /// by cutting the first response at "however".
    pub fn experiment1_local(model: &str) -> Self {
        let mut spec = Self::base(ProtocolKind::Experiment1, &[EXPERIMENT1_STEP1], model);
        spec.cleaning = Cleaning::StripHowever;
        spec
    }

    pub fn experiment2(model: &str) -> Self {
        Self::base(ProtocolKind::Experiment2, &[EXPERIMENT2_PROMPT], model)
    }

    pub fn fewshot(model: &str, examples: Vec<FewShotExample>, tags: SdgLabelSet) -> Self {
        let mut spec = Self::base(ProtocolKind::FewshotTag, &[FEWSHOT_TEMPLATE], model);
        spec.examples = examples;
        spec.tags = tags;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LlmError::InvalidProtocol(m));
        let steps = self.prompts.len();
        match (self.kind, self.cleaning) {
            (ProtocolKind::Experiment1, Cleaning::None) if steps != 2 => {
                return bad(format!("experiment1 needs 2 prompts, got {steps}"))
            }
            (ProtocolKind::Experiment1, Cleaning::StripHowever) if steps != 1 => {
                return bad(format!("experiment1 with local cleaning needs 1 prompt, got {steps}"))
            }
            (ProtocolKind::Experiment2 | ProtocolKind::FewshotTag, _) if steps != 1 => {
                return bad(format!("{} needs 1 prompt, got {steps}", self.kind))
            }
            _ => {}
        }
        if let Some(p) = self.prompts.iter().find(|p| !p.contains("{input}")) {
            return bad(format!("prompt has no {{input}} slot: {p:?}"));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.model.trim().is_empty() {
            return bad("empty model name".into());
        }
        if self.token_budget == 0 {
            return bad("token budget must be positive".into());
        }
        if self.kind == ProtocolKind::FewshotTag {
            if self.examples.is_empty() {
                return bad("few-shot protocol without examples".into());
            }
            if self.tags.is_empty() {
                return bad("few-shot protocol without tags".into());
            }
            if let Some(e) = self.examples.iter().find(|e| !e.labels.is_subset(&self.tags)) {
                return bad(format!("example labels {} outside tag list {}", e.labels, self.tags));
            }
            let needed = estimate_tokens(&self.render_step(0, ""));
            if needed > self.token_budget {
                return Err(LlmError::BudgetExceeded {
                    needed,
                    budget: self.token_budget,
                });
            }
        }
        Ok(())
    }

    fn render_step(&self, step: usize, input: &str) -> String {
        let template = &self.prompts[step];
        if self.kind != ProtocolKind::FewshotTag {
            return template.replace("{input}", input);
        }
        let tags = tag_list(self.tags);
        let mut examples = String::new();
        for e in &self.examples {
            let labels = if e.labels.is_empty() { "NA".to_string() } else { tag_list(e.labels) };
            examples.push_str(&format!("Text: {}\nTags: {labels}\n\n", e.text.trim()));
        }
        template
            .replace("{tags}", &tags)
            .replace("{examples}", &examples)
            .replace("{input}", input)
    }

    /// Renders prompt `step`, refusing prompts over the token budget.
    pub fn render(&self, step: usize, input: &str) -> Result<String> {
        let text = self.render_step(step, input);
        let needed = estimate_tokens(&text);
        if needed > self.token_budget {
            return Err(LlmError::BudgetExceeded {
                needed,
                budget: self.token_budget,
            });
        }
        Ok(text)
    }

    fn request(&self, prompt: String) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            messages: vec![ChatMessage::user(prompt)],
        }
    }

    /// Cache key for the given first-step prompt.
    pub fn cache_key(&self, first_prompt: &str) -> String {
        let material = serde_json::json!([
            self.kind,
            self.cleaning,
            self.prompts.len(),
            self.model,
            self.temperature,
            self.max_tokens,
            first_prompt,
        ]);
        hex::encode(Sha256::digest(material.to_string().as_bytes()))
    }
}

fn tag_list(labels: SdgLabelSet) -> String {
    labels.iter().map(|s| format!("SDG{s}")).collect::<Vec<_>>().join(", ")
}

/// Rough token count: a quarter of the characters, never fewer than the
/// number of whitespace-separated words.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4).max(text.split_whitespace().count())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolInput {
    pub id: String,
    pub text: String,
}

pub fn inputs_from_corpus(corpus: &Corpus) -> Vec<ProtocolInput> {
    corpus
        .iter()
        .map(|d| ProtocolInput {
            id: d.id.clone(),
            text: d.text.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: String,
    pub response: String,
    pub retries: u32,
}

/// Outcome of running a protocol over one input.
///
/// For successful records `labels` is always
/// `parse_sdg_labels(cleaning.apply(last response))`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmRecord {
    pub id: String,
    pub kind: ProtocolKind,
    pub model: String,
    pub cache_key: String,
    pub exchanges: Vec<Exchange>,
    pub cleaning: Cleaning,
    pub labels: SdgLabelSet,
    pub parse_warning: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Seconds since the Unix epoch when the record was produced.
    pub timestamp: u64,
}

impl LlmRecord {
    pub fn final_response(&self) -> Option<&str> {
        self.exchanges.last().map(|e| e.response.as_str())
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn total_retries(&self) -> u32 {
        self.exchanges.iter().map(|e| e.retries).sum()
    }
}

/// Append-only JSONL store of successful records, keyed by cache key.
/// Later lines win over earlier ones with the same key.
#[derive(Debug, Default)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: HashMap<String, LlmRecord>,
    writer: Option<File>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists and appends new records to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let io = |source| LlmError::Io {
            path: path.clone(),
            source,
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: LlmRecord = serde_json::from_str(&line).map_err(|e| LlmError::CacheParse {
                    path: path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                entries.insert(record.cache_key.clone(), record);
            }
        }
        let writer = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(ResponseCache {
            path: Some(path),
            entries,
            writer: Some(writer),
        })
    }

    pub fn get(&self, key: &str) -> Option<&LlmRecord> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, record: LlmRecord) -> Result<()> {
        if let Some(w) = self.writer.as_mut() {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(w, "{line}")
                .and_then(|_| w.flush())
                .map_err(|source| LlmError::Io {
                    path: self.path.clone().unwrap_or_default(),
                    source,
                })?;
        }
        self.entries.insert(record.cache_key.clone(), record);
        Ok(())
    }
}

/// Token bucket shared by worker threads.
#[derive(Debug)]
pub struct RateLimiter {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    /// `rate` tokens per second, bursts up to `capacity`.
    pub fn new(rate: f64, capacity: f64) -> Self {
        assert!(rate > 0.0 && capacity >= 1.0, "invalid rate limiter parameters");
        RateLimiter {
            rate,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let now = Instant::now();
                let (tokens, last) = *state;
                let tokens = (tokens + now.duration_since(last).as_secs_f64() * self.rate).min(self.capacity);
                if tokens >= 1.0 {
                    *state = (tokens - 1.0, now);
                    return;
                }
                *state = (tokens, now);
                (1.0 - tokens) / self.rate
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub workers: usize,
    /// Requests per second across all workers; unlimited when `None`.
    pub requests_per_second: Option<f64>,
    pub retry: RetryPolicy,
    /// Serve everything from the cache and never contact the transport.
    pub replay: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: 4,
            requests_per_second: None,
            retry: RetryPolicy::default(),
            replay: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    /// One record per input, in input order.
    pub records: Vec<LlmRecord>,
    pub requests_sent: usize,
    pub cache_hits: usize,
    /// Inputs that failed because of the remote service or the network.
    pub transport_failures: usize,
}

impl RunSummary {
    pub fn failures(&self) -> impl Iterator<Item = &LlmRecord> {
        self.records.iter().filter(|r| !r.is_ok())
    }
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    spec: &ProtocolSpec,
    input: &ProtocolInput,
    key: String,
    first_prompt: String,
    transport: &dyn Transport,
    options: &RunOptions,
    before_attempt: &dyn Fn(),
    transport_failures: &AtomicUsize,
) -> LlmRecord {
    let mut record = LlmRecord {
        id: input.id.clone(),
        kind: spec.kind,
        model: spec.model.clone(),
        cache_key: key,
        exchanges: Vec::with_capacity(spec.prompts.len()),
        cleaning: spec.cleaning,
        labels: SdgLabelSet::empty(),
        parse_warning: false,
        error: None,
        timestamp: now_secs(),
    };
    let mut prompt = first_prompt;
    for step in 0..spec.prompts.len() {
        if step > 0 {
            let previous = &record.exchanges[step - 1].response;
            prompt = match spec.render(step, previous) {
                Ok(p) => p,
                Err(e) => {
                    record.error = Some(e.to_string());
                    return record;
                }
            };
        }
        match chat_complete(transport, &spec.request(prompt.clone()), &options.retry, before_attempt) {
            Ok(c) => record.exchanges.push(Exchange {
                prompt: prompt.clone(),
                response: c.content,
                retries: c.retries,
            }),
            Err(e) => {
                if e.is_transport() {
                    transport_failures.fetch_add(1, Ordering::SeqCst);
                }
                record.error = Some(e.to_string());
                return record;
            }
        }
    }
    let parsed = parse_sdg_response(spec.cleaning.apply(record.final_response().unwrap_or("")));
    record.labels = parsed.labels;
    record.parse_warning = parsed.warning;
    record
}

fn failed(spec: &ProtocolSpec, input: &ProtocolInput, key: String, error: LlmError) -> LlmRecord {
    LlmRecord {
        id: input.id.clone(),
        kind: spec.kind,
        model: spec.model.clone(),
        cache_key: key,
        exchanges: Vec::new(),
        cleaning: spec.cleaning,
        labels: SdgLabelSet::empty(),
        parse_warning: false,
        error: Some(error.to_string()),
        timestamp: now_secs(),
    }
}

/// Runs `spec` over every input with up to `options.workers` requests in
/// flight. Cached records are reused verbatim; new successes are appended to
/// the cache. Per-input failures become records with `error` set and are
/// not cached.
pub fn run_protocol(
    spec: &ProtocolSpec,
    inputs: &[ProtocolInput],
    transport: Option<&dyn Transport>,
    cache: &mut ResponseCache,
    options: &RunOptions,
) -> Result<RunSummary> {
    spec.validate()?;
    if options.workers == 0 {
        return Err(LlmError::InvalidProtocol("workers must be at least 1".into()));
    }
    if transport.is_none() && !options.replay {
        return Err(LlmError::InvalidProtocol("a transport is required outside replay mode".into()));
    }
    let limiter = match options.requests_per_second {
        Some(r) if r > 0.0 => Some(RateLimiter::new(r, options.workers as f64)),
        Some(r) => return Err(LlmError::InvalidProtocol(format!("invalid request rate {r}"))),
        None => None,
    };
    let sent = AtomicUsize::new(0);
    let hits = AtomicUsize::new(0);
    let transport_failures = AtomicUsize::new(0);
    let next = AtomicUsize::new(0);
    let cache = Mutex::new(cache);
    let results: Mutex<Vec<(usize, LlmRecord)>> = Mutex::new(Vec::with_capacity(inputs.len()));
    let cache_error: Mutex<Option<LlmError>> = Mutex::new(None);
    let before = || {
        if let Some(l) = &limiter {
            l.acquire();
        }
        sent.fetch_add(1, Ordering::SeqCst);
    };

    std::thread::scope(|scope| {
        for _ in 0..options.workers.min(inputs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(input) = inputs.get(i) else { break };
                let first = match spec.render(0, &input.text) {
                    Ok(p) => p,
                    Err(e) => {
                        let rec = failed(spec, input, String::new(), e);
                        results.lock().unwrap().push((i, rec));
                        continue;
                    }
                };
                let key = spec.cache_key(&first);
                let cached = cache.lock().unwrap().get(&key).cloned();
                let record = match cached {
                    Some(mut rec) => {
                        hits.fetch_add(1, Ordering::SeqCst);
                        rec.id = input.id.clone();
                        rec
                    }
                    None => match transport {
                        Some(t) if !options.replay => {
                            let rec = run_one(spec, input, key, first, t, options, &before, &transport_failures);
                            if rec.is_ok() {
                                if let Err(e) = cache.lock().unwrap().insert(rec.clone()) {
                                    cache_error.lock().unwrap().get_or_insert(e);
                                }
                            }
                            rec
                        }
                        _ => failed(spec, input, key, LlmError::ReplayMiss(input.id.clone())),
                    },
                };
                results.lock().unwrap().push((i, record));
            });
        }
    });

    if let Some(e) = cache_error.into_inner().unwrap() {
        return Err(e);
    }
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);
    for (i, rec) in &results {
        if !rec.is_ok() {
            log::warn!("input {} ({}): {}", i, rec.id, rec.error.as_deref().unwrap_or(""));
        } else if rec.parse_warning {
            log::warn!("input {} ({}): no SDG found in response", i, rec.id);
        }
    }
    Ok(RunSummary {
        records: results.into_iter().map(|(_, r)| r).collect(),
        requests_sent: sent.into_inner(),
        cache_hits: hits.into_inner(),
        transport_failures: transport_failures.into_inner(),
    })
}
