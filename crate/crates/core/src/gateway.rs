//! Uniform access to text-generation backends: a chat-completions-compatible
//! HTTP endpoint for real runs and a scripted mock for tests, behind a
//! content-addressed response cache with retry and in-flight bounds.
//!
//! The gateway is the only networked module. Requests are fingerprinted over
//! their full content, so a warm cache replays a run without any network
//! traffic and byte-identically.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::{Message, PromptBundle, Role};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("authentication failed ({status}): check the configured API key")]
    Auth { status: u16 },
    #[error("backend rejected the request ({status}): {detail}")]
    Http { status: u16, detail: String },
    #[error("backend response was not a chat completion: {0}")]
    Malformed(String),
    #[error("no scripted response matches the request: {0}")]
    Script(String),
    #[error("cache I/O error at {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("backend configuration error: {0}")]
    Config(String),
}

impl GatewayError {
    fn retryable(&self) -> bool {
        match self {
            GatewayError::Transport { .. } => true,
            GatewayError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A fully-specified generation request. The harness always issues
/// temperature-0 requests; the field exists so the fingerprint covers it.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub model_name: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Prompt-kind tag carried for scripted routing and logs. Not part of the
    /// fingerprint: two requests with identical content are identical.
    pub tag: String,
}

impl GenerationRequest {
    pub fn from_bundle(model_name: &str, bundle: &PromptBundle, max_tokens: u32) -> Self {
        GenerationRequest {
            model_name: model_name.to_string(),
            messages: bundle.messages.clone(),
            temperature: 0.0,
            max_tokens,
            tag: bundle.kind.tag().to_string(),
        }
    }

    pub fn fingerprint(&self) -> String {
        cache_key(self)
    }

    fn haystack(&self) -> String {
        let mut s = self.tag.clone();
        for m in &self.messages {
            s.push('\n');
            s.push_str(&m.content);
        }
        s
    }
}

#[derive(Serialize)]
struct CanonicalMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct CanonicalRequest<'a> {
    model: &'a str,
    messages: Vec<CanonicalMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

fn role_str(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
    }
}

/// Collision-resistant digest over the canonicalized request content. Stable
/// across runs and platforms.
pub fn cache_key(request: &GenerationRequest) -> String {
    let canonical = CanonicalRequest {
        model: &request.model_name,
        messages: request
            .messages
            .iter()
            .map(|m| CanonicalMessage { role: role_str(m.role), content: &m.content })
            .collect(),
        temperature: request.temperature,
        max_tokens: request.max_tokens,
    };
    let bytes = serde_json::to_vec(&canonical).expect("request serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    pub from_cache: bool,
}

/// What a backend returns before caching metadata is attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    pub finish_reason: FinishReason,
}

pub trait Backend: Send + Sync {
    fn describe(&self) -> String;
    fn generate(&self, request: &GenerationRequest) -> Result<RawResponse, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Additional attempts after the first.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay_ms: 250, max_delay_ms: 8_000 }
    }
}

impl RetryPolicy {
    fn delay_for_attempt(&self, attempt: u32) -> Duration {
        let ms = self.base_delay_ms.saturating_mul(1u64 << attempt.min(16));
        Duration::from_millis(ms.min(self.max_delay_ms))
    }
}

/// Counting semaphore bounding concurrent in-flight transport calls.
struct InFlightLimiter {
    max: usize,
    state: Mutex<usize>,
    cv: Condvar,
}

impl InFlightLimiter {
    fn new(max: usize) -> Self {
        InFlightLimiter { max: max.max(1), state: Mutex::new(0), cv: Condvar::new() }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut count = self.state.lock().unwrap();
        while *count >= self.max {
            count = self.cv.wait(count).unwrap();
        }
        *count += 1;
        InFlightGuard { limiter: self }
    }
}

struct InFlightGuard<'a> {
    limiter: &'a InFlightLimiter,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut count = self.limiter.state.lock().unwrap();
        *count -= 1;
        self.limiter.cv.notify_one();
    }
}

/// Content-addressed on-disk cache: one JSON file per request fingerprint.
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: PathBuf) -> Result<Self, GatewayError> {
        std::fs::create_dir_all(&dir)
            .map_err(|source| GatewayError::Cache { path: dir.display().to_string(), source })?;
        Ok(ResponseCache { dir })
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn get(&self, key: &str) -> Option<RawResponse> {
        let path = self.path_for(key);
        let bytes = std::fs::read(&path).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    fn put(&self, key: &str, response: &RawResponse) -> Result<(), GatewayError> {
        let path = self.path_for(key);
        let tmp = self.dir.join(format!(".{key}.tmp"));
        let bytes = serde_json::to_vec_pretty(response).expect("response serializes");
        std::fs::write(&tmp, bytes)
            .map_err(|source| GatewayError::Cache { path: tmp.display().to_string(), source })?;
        std::fs::rename(&tmp, &path)
            .map_err(|source| GatewayError::Cache { path: path.display().to_string(), source })
    }
}

/// One model endpoint with its cache, retry policy, and concurrency bound.
pub struct ModelClient {
    pub model_name: String,
    backend: Box<dyn Backend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    limiter: InFlightLimiter,
    sleeper: fn(Duration),
}

impl ModelClient {
    pub fn new(
        model_name: impl Into<String>,
        backend: Box<dyn Backend>,
        cache_dir: Option<PathBuf>,
        retry: RetryPolicy,
        max_in_flight: usize,
    ) -> Result<Self, GatewayError> {
        let cache = cache_dir.map(ResponseCache::new).transpose()?;
        Ok(ModelClient {
            model_name: model_name.into(),
            backend,
            cache,
            retry,
            limiter: InFlightLimiter::new(max_in_flight),
            sleeper: std::thread::sleep,
        })
    }

    /// Disable backoff sleeps (keeps retry tests fast).
    pub fn without_backoff_sleep(mut self) -> Self {
        self.sleeper = |_| {};
        self
    }

    pub fn describe_backend(&self) -> String {
        self.backend.describe()
    }

    /// Resolve a request: cache hit, or transport with retry on transient
    /// failures (timeouts, 429, 5xx). Other 4xx statuses fail immediately.
    pub fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        let key = cache_key(request);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key) {
                return Ok(GenerationResponse {
                    text: hit.text,
                    finish_reason: hit.finish_reason,
                    latency_ms: 0,
                    from_cache: true,
                });
            }
        }

        let started = Instant::now();
        let _guard = self.limiter.acquire();
        let total_attempts = 1 + self.retry.max_retries;
        let mut attempt = 0;
        let raw = loop {
            match self.backend.generate(request) {
                Ok(raw) => break raw,
                Err(err) if err.retryable() && attempt + 1 < total_attempts => {
                    (self.sleeper)(self.retry.delay_for_attempt(attempt));
                    attempt += 1;
                }
                Err(err) => {
                    return Err(match err {
                        GatewayError::Transport { detail, .. } => {
                            GatewayError::Transport { attempts: attempt + 1, detail }
                        }
                        GatewayError::Http { status, detail } if err_exhausted(status) => {
                            GatewayError::Transport {
                                attempts: attempt + 1,
                                detail: format!("HTTP {status}: {detail}"),
                            }
                        }
                        other => other,
                    });
                }
            }
        };
        let latency_ms = started.elapsed().as_millis() as u64;

        if let Some(cache) = &self.cache {
            cache.put(&key, &raw)?;
        }
        Ok(GenerationResponse {
            text: raw.text,
            finish_reason: raw.finish_reason,
            latency_ms,
            from_cache: false,
        })
    }
}

fn err_exhausted(status: u16) -> bool {
    status == 429 || status >= 500
}

/// How a scripted rule is matched against a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptKey {
    /// Exact request fingerprint.
    Fingerprint(String),
    /// Substring of the prompt-kind tag or any message content.
    Pattern(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptRule {
    pub key: ScriptKey,
    pub response: String,
}

/// Behavior when no rule matches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptDefault {
    /// Fail the call, identifying the unmatched prompt.
    Error,
    /// Return a fixed response text.
    Fixed(String),
}

/// Deterministic local mock. Rules are tried in order; the first match wins.
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    default: ScriptDefault,
    latency: Option<Duration>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight_seen: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>, default: ScriptDefault) -> Self {
        ScriptedBackend {
            rules,
            default,
            latency: None,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight_seen: AtomicUsize::new(0),
        }
    }

    /// Simulated per-call latency, for concurrency tests.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    /// Transport calls served so far (cache hits never reach the backend).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn max_in_flight_seen(&self) -> usize {
        self.max_in_flight_seen.load(Ordering::SeqCst)
    }

    /// The all-null JSON object for a schema, handy as a scripted default.
    pub fn all_null_json(schema: &crate::schema::Schema) -> String {
        let mut obj = serde_json::Map::new();
        for name in schema.field_names() {
            obj.insert(name.to_string(), serde_json::Value::Null);
        }
        serde_json::Value::Object(obj).to_string()
    }
}

impl Backend for ScriptedBackend {
    fn describe(&self) -> String {
        format!("scripted ({} rules)", self.rules.len())
    }

    fn generate(&self, request: &GenerationRequest) -> Result<RawResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight_seen.fetch_max(now, Ordering::SeqCst);
        if let Some(latency) = self.latency {
            std::thread::sleep(latency);
        }
        let result = self.lookup(request);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

impl ScriptedBackend {
    fn lookup(&self, request: &GenerationRequest) -> Result<RawResponse, GatewayError> {
        let fingerprint = request.fingerprint();
        let haystack = request.haystack();
        for rule in &self.rules {
            let hit = match &rule.key {
                ScriptKey::Fingerprint(fp) => *fp == fingerprint,
                ScriptKey::Pattern(p) => haystack.contains(p.as_str()),
            };
            if hit {
                return Ok(RawResponse { text: rule.response.clone(), finish_reason: FinishReason::Stop });
            }
        }
        match &self.default {
            ScriptDefault::Fixed(text) => {
                Ok(RawResponse { text: text.clone(), finish_reason: FinishReason::Stop })
            }
            ScriptDefault::Error => {
                let head: String = haystack.chars().take(200).collect();
                Err(GatewayError::Script(head))
            }
        }
    }
}

/// Chat-completions HTTP backend. The API key comes from the environment at
/// construction time, never from configuration files.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(
        base_url: &str,
        api_key_env: Option<&str>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpBackend {
            client,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<CanonicalMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

impl Backend for HttpBackend {
    fn describe(&self) -> String {
        format!("http {}", self.url)
    }

    fn generate(&self, request: &GenerationRequest) -> Result<RawResponse, GatewayError> {
        let body = WireRequest {
            model: &request.model_name,
            messages: request
                .messages
                .iter()
                .map(|m| CanonicalMessage { role: role_str(m.role), content: &m.content })
                .collect(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.header("Authorization", format!("Bearer {key}"));
        }
        let response = builder
            .send()
            .map_err(|e| GatewayError::Transport { attempts: 1, detail: e.to_string() })?;
        let status = response.status().as_u16();
        if status == 401 || status == 403 {
            return Err(GatewayError::Auth { status });
        }
        if status != 200 {
            let detail = response.text().unwrap_or_default();
            return Err(GatewayError::Http { status, detail: excerpt200(&detail) });
        }
        let wire: WireResponse = response
            .json()
            .map_err(|e| GatewayError::Malformed(e.to_string()))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Malformed("empty choices array".to_string()))?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            Some("error") => FinishReason::Error,
            _ => FinishReason::Stop,
        };
        Ok(RawResponse { text: choice.message.content.unwrap_or_default(), finish_reason })
    }
}

fn excerpt200(text: &str) -> String {
    text.chars().take(200).collect()
}
