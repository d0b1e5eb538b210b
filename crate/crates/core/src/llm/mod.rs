//! LLM client contract, prompt registry, response parsing, and the judge.
//!
//! Everything above the wire is synchronous: clients take a prompt and
//! return text. The gateway layers retries with exponential backoff on
//! top and keeps two counters — logical calls and raw attempts — for
//! efficiency accounting.

pub mod http;
pub mod mock;
pub mod parse;
pub mod prompts;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_json_object, string_value};
pub use prompts::{render_prompt, DatasetId, PromptTemplate};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("unknown template: {0}")]
    UnknownTemplate(String),
    #[error("template {template} is missing variable {variable}")]
    MissingVariable { template: String, variable: String },
    #[error("retries exhausted after {attempts} attempts: {last_error}")]
    Exhausted { attempts: u32, last_error: String },
    #[error("request timed out")]
    Timeout,
    #[error("no JSON object found in response")]
    NoObjectFound,
    #[error("response JSON is missing key {0:?}")]
    MissingKey(String),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("client error: {0}")]
    Client(String),
}

/// One completion request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_s: f64,
    pub retries: u32,
}

impl LlmRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        LlmRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: 1024,
            timeout_s: 60.0,
            retries: 3,
        }
    }
}

/// Transient vs. fatal failure as reported by a client attempt.
#[derive(Debug)]
pub enum ClientError {
    /// Worth retrying (network blip, 5xx, scripted failure injection).
    Transient(String),
    Timeout,
    /// Retrying cannot help (bad credentials, malformed endpoint).
    Fatal(String),
}

/// A chat-completion style backend: prompt in, text out.
pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<String, ClientError>;
    fn name(&self) -> &str;
}

/// Counter snapshot: (logical calls, raw attempts including retries).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CallCounts {
    pub calls: u64,
    pub attempts: u64,
}

/// Client wrapper adding retry with exponential backoff plus call/latency
/// accounting. Counters update atomically, so one gateway may serve
/// concurrent requests.
pub struct LlmGateway {
    client: Arc<dyn LlmClient>,
    calls: AtomicU64,
    attempts: AtomicU64,
    latency_micros: AtomicU64,
    /// Base backoff delay; tests shrink it to keep retry paths fast.
    backoff_base: Duration,
}

impl LlmGateway {
    pub fn new(client: Arc<dyn LlmClient>) -> Self {
        LlmGateway {
            client,
            calls: AtomicU64::new(0),
            attempts: AtomicU64::new(0),
            latency_micros: AtomicU64::new(0),
            backoff_base: Duration::from_millis(200),
        }
    }

    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    /// One logical completion: up to `retries` additional attempts after
    /// the first, doubling the delay between attempts.
    pub fn complete(&self, request: &LlmRequest) -> Result<String, GatewayError> {
        if request.prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let started = std::time::Instant::now();
        let mut last_error = String::new();
        let max_attempts = request.retries + 1;
        for attempt in 0..max_attempts {
            self.attempts.fetch_add(1, Ordering::Relaxed);
            match self.client.complete(request) {
                Ok(text) => {
                    self.latency_micros
                        .fetch_add(started.elapsed().as_micros() as u64, Ordering::Relaxed);
                    return Ok(text);
                }
                Err(ClientError::Fatal(msg)) => {
                    self.latency_micros
                        .fetch_add(started.elapsed().as_micros() as u64, Ordering::Relaxed);
                    return Err(GatewayError::Client(msg));
                }
                Err(ClientError::Timeout) => {
                    last_error = "timeout".to_string();
                }
                Err(ClientError::Transient(msg)) => {
                    last_error = msg;
                }
            }
            if attempt + 1 < max_attempts {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt));
            }
        }
        self.latency_micros
            .fetch_add(started.elapsed().as_micros() as u64, Ordering::Relaxed);
        if last_error == "timeout" {
            return Err(GatewayError::Timeout);
        }
        Err(GatewayError::Exhausted {
            attempts: max_attempts,
            last_error,
        })
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts {
            calls: self.calls.load(Ordering::Relaxed),
            attempts: self.attempts.load(Ordering::Relaxed),
        }
    }

    pub fn total_latency(&self) -> Duration {
        Duration::from_micros(self.latency_micros.load(Ordering::Relaxed))
    }

    pub fn client_name(&self) -> &str {
        self.client.name()
    }
}

/// Judge verdict for one (question, prediction, gold) triple.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub correct: bool,
    pub raw: String,
}

/// Ask the judge whether a prediction matches the gold answer: one rendered
/// prompt, one completion, `correct` iff the parsed `"response"` value is
/// "yes" (case-insensitive).
pub fn judge(
    gateway: &LlmGateway,
    question: &str,
    prediction: &str,
    gold: &str,
) -> Result<JudgeVerdict, GatewayError> {
    let vars: std::collections::BTreeMap<&str, &str> = [
        ("question", question),
        ("prediction", prediction),
        ("answer", gold),
    ]
    .into_iter()
    .collect();
    let prompt = render_prompt("judge.accuracy", &vars)?;
    let raw = gateway.complete(&LlmRequest::new(prompt))?;
    let map = parse_json_object(&raw, &["response"])?;
    let verdict = string_value(&map, "response")?;
    Ok(JudgeVerdict {
        correct: verdict.eq_ignore_ascii_case("yes"),
        raw,
    })
}
