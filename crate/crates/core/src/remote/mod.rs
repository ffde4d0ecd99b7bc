//! Client for remote text-generation services.
//!
//! One internal contract (`CompletionService`) with an HTTP implementation
//! and a scripted stub. The client never retries; callers own that policy.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub const ENDPOINT_VAR: &str = "MAFIG_REMOTE_ENDPOINT";
pub const KEY_VAR: &str = "MAFIG_REMOTE_KEY";
pub const MODEL_VAR: &str = "MAFIG_REMOTE_MODEL";

pub const DEFAULT_TEMPERATURE: f64 = 0.9;
pub const DEFAULT_TOP_P: f64 = 0.95;
pub const DEFAULT_MAX_TOKENS: u32 = 2560;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("service answered with status {status}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("invalid client configuration: {0}")]
    Config(String),
}

/// Bearer credential. Never printed.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

/// Request/response shape spoken on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireFormat {
    /// `{model, prompt, temperature, top_p, max_tokens}` -> `{text}`.
    #[default]
    Simple,
    /// Chat-completions: `messages` in, `choices[0].message.content` out.
    Chat,
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub endpoint: String,
    pub key: Option<ApiKey>,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub wire: WireFormat,
}

impl ClientConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        ClientConfig {
            endpoint: endpoint.into(),
            key: None,
            model: model.into(),
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            max_tokens: DEFAULT_MAX_TOKENS,
            timeout: DEFAULT_TIMEOUT,
            max_in_flight: 4,
            wire: WireFormat::Simple,
        }
    }

    /// Reads endpoint, key and model from the environment. `None` when the
    /// endpoint variable is unset.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(ENDPOINT_VAR).ok().filter(|s| !s.is_empty())?;
        let model = std::env::var(MODEL_VAR).unwrap_or_else(|_| "default".into());
        let mut cfg = ClientConfig::new(endpoint, model);
        cfg.key = std::env::var(KEY_VAR).ok().filter(|s| !s.is_empty()).map(ApiKey);
        Some(cfg)
    }

    pub fn validate(&self) -> Result<(), RemoteError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(RemoteError::Config(format!("temperature {} < 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(RemoteError::Config(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(RemoteError::Config("max_tokens must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(RemoteError::Config("max_in_flight must be at least 1".into()));
        }
        if self.endpoint.is_empty() {
            return Err(RemoteError::Config("empty endpoint".into()));
        }
        Ok(())
    }
}

/// Generated text with the wall time the call took.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency: Duration,
}

pub trait CompletionService: Send + Sync {
    /// At most one request per call.
    fn complete(&self, prompt: &str) -> Result<Completion, RemoteError>;

    /// Short label recorded as provenance.
    fn label(&self) -> String;
}

/// JSON body for `prompt` under `cfg`.
pub fn request_body(cfg: &ClientConfig, prompt: &str) -> serde_json::Value {
    match cfg.wire {
        WireFormat::Simple => json!({
            "model": cfg.model,
            "prompt": prompt,
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
            "max_tokens": cfg.max_tokens,
        }),
        WireFormat::Chat => json!({
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
            "max_tokens": cfg.max_tokens,
        }),
    }
}

/// Extracts the generated text from a response body.
pub fn parse_response(wire: WireFormat, body: &str) -> Result<String, RemoteError> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| RemoteError::Malformed(format!("not JSON: {e}")))?;
    let text = match wire {
        WireFormat::Simple => v.get("text"),
        WireFormat::Chat => {
            v.get("choices").and_then(|c| c.get(0)).and_then(|c| c.get("message")).and_then(|m| m.get("content"))
        }
    };
    match text {
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(RemoteError::Malformed("text field is not a string".into())),
        None => Err(RemoteError::Malformed("missing text field".into())),
    }
}

/// Counting gate bounding concurrent requests.
struct Gate {
    used: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.limit {
            used = self.freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpClient {
    cfg: ClientConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpClient").field("cfg", &self.cfg).finish()
    }
}

impl HttpClient {
    pub fn new(cfg: ClientConfig) -> Result<Self, RemoteError> {
        cfg.validate()?;
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(cfg.timeout)).http_status_as_error(false).build().into();
        let gate = Gate { used: Mutex::new(0), freed: Condvar::new(), limit: cfg.max_in_flight };
        Ok(HttpClient { cfg, agent, gate })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    fn map_err(&self, e: ureq::Error) -> RemoteError {
        match e {
            ureq::Error::Timeout(_) => RemoteError::Timeout(self.cfg.timeout),
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => RemoteError::Timeout(self.cfg.timeout),
            other => RemoteError::Transport(other.to_string()),
        }
    }
}

impl CompletionService for HttpClient {
    fn complete(&self, prompt: &str) -> Result<Completion, RemoteError> {
        let _slot = self.gate.enter();
        let started = Instant::now();
        log::debug!(
            "completion request to {} (model {}, {} prompt chars)",
            self.cfg.endpoint,
            self.cfg.model,
            prompt.len()
        );
        let body = request_body(&self.cfg, prompt).to_string();
        let mut req = self.agent.post(&self.cfg.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.key {
            req = req.header("Authorization", &format!("Bearer {}", key.expose()));
        }
        let mut resp = req.send(body.as_bytes()).map_err(|e| self.map_err(e))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| match self.map_err(e) {
            RemoteError::Transport(m) => RemoteError::Malformed(m),
            other => other,
        })?;
        let latency = started.elapsed();
        log::debug!("completion status {status} after {latency:?}");
        if !(200..300).contains(&status) {
            return Err(RemoteError::Status { status, body: text });
        }
        Ok(Completion { text: parse_response(self.cfg.wire, &text)?, latency })
    }

    fn label(&self) -> String {
        format!("remote:{}", self.cfg.model)
    }
}

/// Scripted test double: replays queued replies in order, then repeats the
/// last one. Records every prompt it receives.
#[derive(Debug)]
pub struct StubClient {
    replies: Mutex<VecDeque<Result<String, RemoteError>>>,
    last: Mutex<Option<Result<String, RemoteError>>>,
    prompts: Mutex<Vec<String>>,
}

impl StubClient {
    pub fn new(replies: impl IntoIterator<Item = Result<String, RemoteError>>) -> Self {
        StubClient {
            replies: Mutex::new(replies.into_iter().collect()),
            last: Mutex::new(None),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn always(text: impl Into<String>) -> Self {
        StubClient::new([Ok(text.into())])
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl CompletionService for StubClient {
    fn complete(&self, prompt: &str) -> Result<Completion, RemoteError> {
        self.prompts.lock().unwrap_or_else(|e| e.into_inner()).push(prompt.to_owned());
        let next = self.replies.lock().unwrap_or_else(|e| e.into_inner()).pop_front();
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        let reply = match next {
            Some(r) => {
                *last = Some(r.clone());
                r
            }
            None => last.clone().unwrap_or_else(|| Err(RemoteError::Malformed("stub has no replies".into()))),
        };
        reply.map(|text| Completion { text, latency: Duration::ZERO })
    }

    fn label(&self) -> String {
        "stub".into()
    }
}
