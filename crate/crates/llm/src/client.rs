//! Chat-completion requests with bounded retries, exponential backoff,
//! `Retry-After` support and a minimum interval between request starts.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::prompt::PromptBundle;

pub const DEFAULT_API_KEY_ENV: &str = "ROBKIT_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: f64,
    /// Retries after the first attempt.
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub temperature: f64,
    pub concurrency: usize,
    /// Minimum spacing between request starts, across all workers.
    pub min_interval_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: "http://localhost:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 60.0,
            retries: 3,
            backoff_ms: 500,
            max_backoff_ms: 30_000,
            temperature: 0.0,
            concurrency: 4,
            min_interval_ms: 0,
        }
    }
}

impl EndpointConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty())
    }

    /// Delay before retry number `attempt` (0-based) when the server gives
    /// no `Retry-After`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.backoff_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.max_backoff_ms))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
    pub retry_after: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout(String),
    Connection(String),
    Other(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        !matches!(self, TransportError::Other(_))
    }
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Timeout(m) => write!(f, "timeout: {m}"),
            TransportError::Connection(m) => write!(f, "connection: {m}"),
            TransportError::Other(m) => write!(f, "{m}"),
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        UreqTransport { agent }
    }
}

fn parse_retry_after(v: &str) -> Option<Duration> {
    v.trim().parse::<f64>().ok().filter(|s| *s >= 0.0).map(Duration::from_secs_f64)
}

impl Transport for UreqTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut r = self.agent.post(&req.url);
        for (k, v) in &req.headers {
            r = r.header(k, v);
        }
        match r.send(req.body.as_str()) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let retry_after = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(parse_retry_after);
                let body = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| classify(&e))?;
                Ok(HttpResponse {
                    status,
                    body,
                    retry_after,
                })
            }
            Err(e) => Err(classify(&e)),
        }
    }
}

fn classify(e: &ureq::Error) -> TransportError {
    match e {
        ureq::Error::Timeout(_) => TransportError::Timeout(e.to_string()),
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut || io.kind() == std::io::ErrorKind::WouldBlock => {
            TransportError::Timeout(e.to_string())
        }
        ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            TransportError::Connection(e.to_string())
        }
        _ => TransportError::Other(e.to_string()),
    }
}

/// Spaces request starts at least `interval` apart.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(interval: Duration) -> Self {
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    pub fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let slot = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

pub fn request_body(bundle: &PromptBundle, cfg: &EndpointConfig) -> Value {
    serde_json::json!({
        "model": cfg.model,
        "messages": bundle.messages,
        "temperature": cfg.temperature,
    })
}

/// Assistant text from a chat-completion response body.
pub fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.pointer("/choices/0/message/content")
        .or_else(|| v.pointer("/choices/0/text"))
        .or_else(|| v.pointer("/message/content"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallOutcome {
    pub attempts: u32,
    pub status: Option<u16>,
    /// Raw response body of the final attempt.
    pub body: Option<String>,
    /// Assistant text, when the call succeeded.
    pub content: Option<String>,
    pub error: Option<String>,
}

impl CallOutcome {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

fn retryable_status(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

pub fn call_endpoint(
    bundle: &PromptBundle,
    cfg: &EndpointConfig,
    api_key: Option<&str>,
    transport: &dyn Transport,
    limiter: &RateLimiter,
) -> CallOutcome {
    let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
    if let Some(k) = api_key {
        headers.push(("Authorization".to_string(), format!("Bearer {k}")));
    }
    let req = HttpRequest {
        url: cfg.url.clone(),
        headers,
        body: request_body(bundle, cfg).to_string(),
    };
    let mut outcome = CallOutcome {
        attempts: 0,
        status: None,
        body: None,
        content: None,
        error: None,
    };
    for attempt in 0..=cfg.retries {
        limiter.wait();
        outcome.attempts = attempt + 1;
        let delay = match transport.send(&req) {
            Ok(resp) if (200..300).contains(&resp.status) => {
                outcome.content = Some(extract_content(&resp.body).unwrap_or_else(|| resp.body.clone()));
                outcome.status = Some(resp.status);
                outcome.body = Some(resp.body);
                outcome.error = None;
                return outcome;
            }
            Ok(resp) => {
                outcome.status = Some(resp.status);
                outcome.error = Some(format!("HTTP {}", resp.status));
                outcome.body = Some(resp.body);
                if !retryable_status(resp.status) {
                    return outcome;
                }
                resp.retry_after.map(|d| d.min(Duration::from_millis(cfg.max_backoff_ms)))
            }
            Err(e) => {
                outcome.error = Some(e.to_string());
                if !e.retryable() {
                    return outcome;
                }
                None
            }
        };
        if attempt < cfg.retries {
            let wait = delay.unwrap_or_else(|| cfg.backoff(attempt));
            log::debug!("{}: attempt {} failed ({:?}); retrying in {wait:?}", bundle.target_id, attempt + 1, outcome.error);
            std::thread::sleep(wait);
        }
    }
    log::warn!("{}: giving up after {} attempts: {:?}", bundle.target_id, outcome.attempts, outcome.error);
    outcome
}
