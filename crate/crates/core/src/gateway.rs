//! Uniform access to a text-completion backend. Owns the sampling
//! configuration, the retry policy, and the response-count ledger that
//! defines the cost metrics: one successful response equals one unit of
//! cost, attributed to the module that asked for it.

use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

/// Which pipeline module is paying for a completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Caller {
    Recognizer,
    Decomposer,
    Processor,
}

impl Caller {
    pub fn as_str(&self) -> &'static str {
        match self {
            Caller::Recognizer => "recognizer",
            Caller::Decomposer => "decomposer",
            Caller::Processor => "processor",
        }
    }
}

/// Sampling settings sent with every request. The defaults are the
/// benchmark settings: temperature 0, 256 max tokens, seed 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: i64,
    pub stop_sequences: Vec<String>,
}

impl Default for GenerationConfig {
    fn default() -> GenerationConfig {
        GenerationConfig {
            temperature: 0.0,
            max_tokens: 256,
            seed: 0,
            stop_sequences: Vec::new(),
        }
    }
}

/// Live response counters, incremented once per successful completion.
#[derive(Debug, Default)]
pub struct BudgetLedger {
    recognizer: AtomicU64,
    decomposer: AtomicU64,
    processor: AtomicU64,
}

impl BudgetLedger {
    pub fn new() -> BudgetLedger {
        BudgetLedger::default()
    }

    fn record(&self, caller: Caller) {
        self.cell(caller).fetch_add(1, Ordering::Relaxed);
    }

    fn cell(&self, caller: Caller) -> &AtomicU64 {
        match caller {
            Caller::Recognizer => &self.recognizer,
            Caller::Decomposer => &self.decomposer,
            Caller::Processor => &self.processor,
        }
    }

    pub fn count(&self, caller: Caller) -> u64 {
        self.cell(caller).load(Ordering::Relaxed)
    }

    pub fn total_responses(&self) -> u64 {
        self.count(Caller::Recognizer) + self.count(Caller::Decomposer) + self.count(Caller::Processor)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let mut per_module = BTreeMap::new();
        for caller in [Caller::Recognizer, Caller::Decomposer, Caller::Processor] {
            per_module.insert(caller.as_str().to_string(), self.count(caller));
        }
        LedgerSnapshot {
            total_responses: self.total_responses(),
            per_module,
        }
    }
}

/// Frozen ledger counts as they appear in run reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerSnapshot {
    pub total_responses: u64,
    pub per_module: BTreeMap<String, u64>,
}

/// Errors a backend can produce on one attempt. Only `Transient` is retried.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("transient backend failure: {detail}")]
    Transient { detail: String },
    #[error("backend rejected the request ({status:?}): {detail}")]
    Rejected { status: Option<u16>, detail: String },
    #[error("environment variable {var} is not set")]
    MissingApiKey { var: String },
    #[error("script exhausted after {length} responses")]
    ScriptExhausted { length: usize },
    #[error("script expected a prompt containing {expected:?}, got: {prompt_head:?}")]
    ScriptMismatch { expected: String, prompt_head: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("backend unreachable after {attempts} attempts: {detail}")]
    BackendUnreachable { attempts: u32, detail: String },
    #[error("backend rejected the request ({status:?}): {detail}")]
    BackendRejected { status: Option<u16>, detail: String },
    #[error("environment variable {var} is not set")]
    MissingApiKey { var: String },
    #[error("script exhausted after {length} responses")]
    ScriptExhausted { length: usize },
    #[error("script expected a prompt containing {expected:?}, got: {prompt_head:?}")]
    ScriptMismatch { expected: String, prompt_head: String },
}

/// A text-completion backend: one prompt in, one response text out.
pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &str, config: &GenerationConfig) -> Result<String, BackendError>;
}

/// Bounded retry with exponential backoff, applied to transient failures only.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Policy with no waiting, for tests and scripted runs.
    pub fn immediate(attempts: u32) -> RetryPolicy {
        RetryPolicy {
            attempts,
            initial_backoff: Duration::ZERO,
        }
    }

    fn backoff(&self, completed_attempts: u32) -> Duration {
        // 1s, 2s, 4s, ... capped at 30s
        let factor = 1u32 << completed_attempts.saturating_sub(1).min(16);
        (self.initial_backoff * factor).min(Duration::from_secs(30))
    }
}

/// The single entry point the pipeline modules talk to.
pub struct Gateway {
    backend: Box<dyn Backend>,
    config: GenerationConfig,
    retry: RetryPolicy,
    ledger: BudgetLedger,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>, config: GenerationConfig, retry: RetryPolicy) -> Gateway {
        Gateway {
            backend,
            config,
            retry,
            ledger: BudgetLedger::new(),
        }
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.config
    }

    /// Request one completion for `caller`. The ledger is incremented by
    /// exactly one per response actually received; retries that never got a
    /// response do not count.
    pub fn complete(&self, prompt: &str, caller: Caller) -> Result<String, GatewayError> {
        debug_assert!(!prompt.is_empty(), "prompts must be non-empty");
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.backend.complete(prompt, &self.config) {
                Ok(text) => {
                    self.ledger.record(caller);
                    return Ok(text);
                }
                Err(BackendError::Transient { detail }) => {
                    if attempt >= self.retry.attempts {
                        return Err(GatewayError::BackendUnreachable {
                            attempts: attempt,
                            detail,
                        });
                    }
                    std::thread::sleep(self.retry.backoff(attempt));
                }
                Err(BackendError::Rejected { status, detail }) => {
                    return Err(GatewayError::BackendRejected { status, detail })
                }
                Err(BackendError::MissingApiKey { var }) => {
                    return Err(GatewayError::MissingApiKey { var })
                }
                Err(BackendError::ScriptExhausted { length }) => {
                    return Err(GatewayError::ScriptExhausted { length })
                }
                Err(BackendError::ScriptMismatch {
                    expected,
                    prompt_head,
                }) => {
                    return Err(GatewayError::ScriptMismatch {
                        expected,
                        prompt_head,
                    })
                }
            }
        }
    }
}

/// One scripted exchange: an optional substring the prompt must contain,
/// and the response to replay.
#[derive(Debug, Clone)]
pub struct ScriptEntry {
    pub expect: Option<String>,
    pub response: String,
}

impl ScriptEntry {
    pub fn response(text: impl Into<String>) -> ScriptEntry {
        ScriptEntry {
            expect: None,
            response: text.into(),
        }
    }

    pub fn expecting(expect: impl Into<String>, text: impl Into<String>) -> ScriptEntry {
        ScriptEntry {
            expect: Some(expect.into()),
            response: text.into(),
        }
    }
}

/// Replays a fixed list of responses in order; the deterministic backend
/// used by tests and offline runs. Calls are serialized internally so the
/// script order is preserved under concurrency.
#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    cursor: Mutex<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScriptError {
    #[error("a script must contain at least one entry")]
    Empty,
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<ScriptedBackend, ScriptError> {
        if entries.is_empty() {
            return Err(ScriptError::Empty);
        }
        Ok(ScriptedBackend {
            entries,
            cursor: Mutex::new(0),
        })
    }

    /// Parse a script from JSON lines of `{"response": "...", "expect": "..."}`
    /// (`expect` optional). Blank lines and `#` comment lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<ScriptedBackend, ScriptError> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| ScriptError::Malformed {
                    line: lineno + 1,
                    detail: e.to_string(),
                })?;
            let response = value
                .get("response")
                .and_then(|v| v.as_str())
                .ok_or_else(|| ScriptError::Malformed {
                    line: lineno + 1,
                    detail: "missing string field \"response\"".into(),
                })?;
            let expect = value.get("expect").and_then(|v| v.as_str()).map(String::from);
            entries.push(ScriptEntry {
                expect,
                response: response.to_string(),
            });
        }
        ScriptedBackend::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, prompt: &str, _config: &GenerationConfig) -> Result<String, BackendError> {
        let mut cursor = self.cursor.lock().expect("script cursor poisoned");
        if *cursor >= self.entries.len() {
            return Err(BackendError::ScriptExhausted {
                length: self.entries.len(),
            });
        }
        let entry = &self.entries[*cursor];
        if let Some(expect) = &entry.expect {
            if !prompt.contains(expect.as_str()) {
                return Err(BackendError::ScriptMismatch {
                    expected: expect.clone(),
                    prompt_head: prompt.chars().take(200).collect(),
                });
            }
        }
        *cursor += 1;
        Ok(entry.response.clone())
    }
}

/// JSON-over-HTTP chat-completion backend. The request and response field
/// names are documented in `docs/protocol.md`. The API key is read from the
/// named environment variable at call time, never from configuration values.
pub struct HttpBackend {
    endpoint: String,
    model: String,
    api_key_var: String,
}

impl HttpBackend {
    /// The endpoint is not probed here; reachability matters only at the
    /// first completion.
    pub fn new(
        endpoint: impl Into<String>,
        api_key_var: impl Into<String>,
        model: impl Into<String>,
    ) -> HttpBackend {
        HttpBackend {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_var: api_key_var.into(),
        }
    }

    fn request_body(&self, prompt: &str, config: &GenerationConfig) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
            "seed": config.seed,
        });
        if !config.stop_sequences.is_empty() {
            body["stop"] = serde_json::json!(config.stop_sequences);
        }
        body
    }
}

fn retryable_status(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

/// Pull the first choice's text out of a chat-completion response body.
fn extract_choice_text(body: &serde_json::Value) -> Option<String> {
    let first = body.get("choices")?.get(0)?;
    if let Some(content) = first.pointer("/message/content").and_then(|v| v.as_str()) {
        return Some(content.to_string());
    }
    first
        .get("text")
        .and_then(|v| v.as_str())
        .map(String::from)
}

impl Backend for HttpBackend {
    fn complete(&self, prompt: &str, config: &GenerationConfig) -> Result<String, BackendError> {
        let api_key = std::env::var(&self.api_key_var).map_err(|_| BackendError::MissingApiKey {
            var: self.api_key_var.clone(),
        })?;
        let body = self.request_body(prompt, config);
        let response = ureq::post(&self.endpoint)
            .set("Authorization", &format!("Bearer {api_key}"))
            .set("Content-Type", "application/json")
            .send_string(&body.to_string());
        match response {
            Ok(resp) => {
                let text = resp.into_string().map_err(|e| BackendError::Transient {
                    detail: format!("failed to read response body: {e}"),
                })?;
                let value: serde_json::Value =
                    serde_json::from_str(&text).map_err(|e| BackendError::Rejected {
                        status: Some(200),
                        detail: format!("unparseable response body: {e}"),
                    })?;
                extract_choice_text(&value).ok_or_else(|| BackendError::Rejected {
                    status: Some(200),
                    detail: "response carries no choice text".into(),
                })
            }
            Err(ureq::Error::Status(status, resp)) => {
                let detail = resp
                    .into_string()
                    .unwrap_or_else(|e| format!("unreadable error body: {e}"));
                if retryable_status(status) {
                    Err(BackendError::Transient {
                        detail: format!("HTTP {status}: {detail}"),
                    })
                } else {
                    Err(BackendError::Rejected {
                        status: Some(status),
                        detail,
                    })
                }
            }
            Err(ureq::Error::Transport(t)) => Err(BackendError::Transient {
                detail: t.to_string(),
            }),
        }
    }
}
