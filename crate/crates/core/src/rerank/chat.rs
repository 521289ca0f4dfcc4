//! Chat-completion backends, response cache, retry and rate limiting.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::seed::sha256_hex;

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

/// Exactly what goes over the wire, and what the cache key hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportedUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub content: String,
    pub usage: Option<ReportedUsage>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    /// At least one count was estimated from character length.
    pub estimated: bool,
}

/// `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64, estimated: bool) -> Self {
        Self {
            prompt_tokens,
            completion_tokens,
            total_tokens: prompt_tokens + completion_tokens,
            estimated,
        }
    }

    /// Reported usage when the backend gave it, otherwise an estimate.
    pub fn resolve(request: &ChatRequest, reply: &ChatReply) -> Self {
        match reply.usage {
            Some(u) => Self::new(u.prompt_tokens, u.completion_tokens, false),
            None => Self::new(
                request.messages.iter().map(|m| estimate_tokens(&m.content)).sum(),
                estimate_tokens(&reply.content),
                true,
            ),
        }
    }

    pub fn add(&mut self, other: &TokenUsage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.total_tokens += other.total_tokens;
        self.estimated |= other.estimated;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Analyzer,
    Decider,
}

/// Out-of-band context passed alongside a request. Real backends ignore it;
/// mock backends use it to answer without parsing prompt text.
#[derive(Debug, Clone, Copy)]
pub struct CallHint<'a> {
    pub agent: AgentRole,
    pub query_id: &'a str,
    /// Candidate ids in prompt numbering order.
    pub pool_ids: &'a [String],
}

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    #[error("{backend}: {message}")]
    Backend {
        backend: String,
        retryable: bool,
        message: String,
    },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("missing configuration: {0}")]
    Config(String),
}

impl ChatError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ChatError::Backend { retryable: true, .. })
    }
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn model(&self) -> &str;
    fn complete(&self, request: &ChatRequest, hint: &CallHint<'_>) -> Result<ChatReply, ChatError>;
}

/// OpenAI-compatible `POST {base}/chat/completions`.
pub struct HttpChatBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
    model: String,
}

impl HttpChatBackend {
    pub fn new(
        base_url: &str,
        api_key: Option<String>,
        model: &str,
        timeout: Duration,
    ) -> Result<Self, ChatError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ChatError::Config(format!("HTTP client: {e}")))?;
        Ok(Self {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            model: model.to_string(),
        })
    }

    /// `CHAT_API_BASE`, `CHAT_API_KEY` and `CHAT_MODEL`; `model` overrides
    /// the environment when given.
    pub fn from_env(model: Option<&str>, timeout: Duration) -> Result<Self, ChatError> {
        let base = std::env::var("CHAT_API_BASE")
            .map_err(|_| ChatError::Config("CHAT_API_BASE is not set".into()))?;
        let model = match model {
            Some(m) => m.to_string(),
            None => std::env::var("CHAT_MODEL")
                .map_err(|_| ChatError::Config("CHAT_MODEL is not set".into()))?,
        };
        let key = std::env::var("CHAT_API_KEY").ok();
        Self::new(&base, key, &model, timeout)
    }

    fn fail(&self, retryable: bool, message: String) -> ChatError {
        ChatError::Backend {
            backend: self.name().to_string(),
            retryable,
            message,
        }
    }

    pub fn parse_response(&self, body: &Value) -> Result<ChatReply, ChatError> {
        let content = body
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| self.fail(false, "response has no choices[0].message.content".into()))?;
        let usage = body.get("usage").and_then(|u| {
            Some(ReportedUsage {
                prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
                completion_tokens: u.get("completion_tokens")?.as_u64()?,
            })
        });
        Ok(ChatReply {
            content: content.to_string(),
            usage,
        })
    }
}

impl ChatBackend for HttpChatBackend {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest, _hint: &CallHint<'_>) -> Result<ChatReply, ChatError> {
        let body = json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| self.fail(true, e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| self.fail(true, e.to_string()))?;
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            return Err(self.fail(retryable, format!("HTTP {status}: {text}")));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| self.fail(false, format!("invalid JSON: {e}")))?;
        self.parse_response(&value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Same attempt budget without sleeping, for tests and mocks.
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Wait before retry number `attempt` (1-based): exponential growth
    /// capped at `max_delay`, plus up to one base delay of jitter.
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(1u32 << (attempt.saturating_sub(1)).min(20));
        let jitter = self.base_delay.mul_f64(rand::random::<f64>());
        exp.min(self.max_delay) + jitter
    }
}

/// Spaces request starts at least `interval` apart across all threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        Self {
            interval: Duration::from_secs(60) / requests.max(1),
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let start = (*next).max(now);
            *next = start + self.interval;
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedReply {
    pub content: String,
    pub usage: TokenUsage,
}

/// One JSON file per request, named by the SHA-256 of the serialized
/// request. Writes go through a temporary file and a rename, so concurrent
/// writers of the same key leave one complete value.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn key(request: &ChatRequest) -> String {
        sha256_hex(&serde_json::to_vec(request).expect("request serializes"))
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// A corrupt entry reads as a miss.
    pub fn get(&self, key: &str) -> Option<CachedReply> {
        let bytes = fs::read(self.path(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put(&self, key: &str, value: &CachedReply) -> std::io::Result<()> {
        let tmp = self.dir.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, serde_json::to_vec(value).expect("reply serializes"))?;
        fs::rename(&tmp, self.path(key))
    }
}

/// A completed exchange with one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub agent: AgentRole,
    pub messages: Vec<ChatMessage>,
    pub output: String,
    pub usage: TokenUsage,
}

/// Backend plus cache, retries and rate limiting.
#[derive(Clone)]
pub struct ChatClient {
    backend: Arc<dyn ChatBackend>,
    pub temperature: f64,
    pub retry: RetryPolicy,
    cache: Option<ResponseCache>,
    limiter: Option<Arc<RateLimiter>>,
}

impl ChatClient {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            temperature: 0.0,
            retry: RetryPolicy::default(),
            cache: None,
            limiter: None,
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn model(&self) -> &str {
        self.backend.model()
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn call(
        &self,
        messages: Vec<ChatMessage>,
        hint: &CallHint<'_>,
    ) -> Result<CallRecord, ChatError> {
        let request = ChatRequest {
            model: self.backend.model().to_string(),
            temperature: self.temperature,
            messages,
        };
        let key = self.cache.as_ref().map(|_| ResponseCache::key(&request));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key) {
                return Ok(CallRecord {
                    agent: hint.agent,
                    messages: request.messages,
                    output: hit.content,
                    usage: hit.usage,
                });
            }
        }

        let attempts = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        let reply = loop {
            attempt += 1;
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.backend.complete(&request, hint) {
                Ok(reply) => break reply,
                Err(e) if e.is_retryable() && attempt < attempts => {
                    log::warn!(
                        "{} call for {} failed (attempt {attempt}/{attempts}): {e}",
                        self.backend.name(),
                        hint.query_id
                    );
                    std::thread::sleep(self.retry.delay(attempt));
                }
                Err(e) if e.is_retryable() => {
                    return Err(ChatError::Exhausted {
                        attempts: attempt,
                        last: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        };

        let usage = TokenUsage::resolve(&request, &reply);
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            let value = CachedReply {
                content: reply.content.clone(),
                usage,
            };
            if let Err(e) = cache.put(key, &value) {
                log::warn!("cannot write cache entry {key}: {e}");
            }
        }
        Ok(CallRecord {
            agent: hint.agent,
            messages: request.messages,
            output: reply.content,
            usage,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::AtomicUsize;

    use super::*;

    struct Flaky {
        fail_first: usize,
        retryable: bool,
        calls: AtomicUsize,
    }

    impl ChatBackend for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn model(&self) -> &str {
            "m"
        }
        fn complete(&self, req: &ChatRequest, _: &CallHint<'_>) -> Result<ChatReply, ChatError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                return Err(ChatError::Backend {
                    backend: "flaky".into(),
                    retryable: self.retryable,
                    message: format!("failure {n}"),
                });
            }
            Ok(ChatReply {
                content: format!("echo {}", req.messages.len()),
                usage: None,
            })
        }
    }

    fn flaky(fail_first: usize, retryable: bool) -> Arc<Flaky> {
        Arc::new(Flaky {
            fail_first,
            retryable,
            calls: AtomicUsize::new(0),
        })
    }

    fn msgs() -> Vec<ChatMessage> {
        vec![ChatMessage {
            role: Role::User,
            content: "abcdefghi".into(),
        }]
    }

    const HINT: CallHint<'static> = CallHint {
        agent: AgentRole::Analyzer,
        query_id: "q",
        pool_ids: &[],
    };

    #[test]
    fn retries_then_succeeds() {
        let b = flaky(4, true);
        let client = ChatClient::new(b.clone()).with_retry(RetryPolicy::immediate(5));
        let rec = client.call(msgs(), &HINT).unwrap();
        assert_eq!(rec.output, "echo 1");
        assert_eq!(b.calls.load(Ordering::SeqCst), 5);
    }

    #[test]
    fn exhausts_after_five() {
        let b = flaky(10, true);
        let client = ChatClient::new(b.clone()).with_retry(RetryPolicy::immediate(5));
        assert!(matches!(
            client.call(msgs(), &HINT),
            Err(ChatError::Exhausted { attempts: 5, .. })
        ));
        assert_eq!(b.calls.load(Ordering::SeqCst), 5);
    }

    #[test]
    fn permanent_errors_are_not_retried() {
        let b = flaky(10, false);
        let client = ChatClient::new(b.clone()).with_retry(RetryPolicy::immediate(5));
        assert!(client.call(msgs(), &HINT).is_err());
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn estimated_usage() {
        let client = ChatClient::new(flaky(0, true));
        let rec = client.call(msgs(), &HINT).unwrap();
        // 9 chars -> 3 tokens; "echo 1" -> 2 tokens.
        assert_eq!(rec.usage, TokenUsage::new(3, 2, true));
    }

    #[test]
    fn warm_cache_skips_backend() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let b = flaky(0, true);
        let client = ChatClient::new(b.clone()).with_cache(cache);
        let first = client.call(msgs(), &HINT).unwrap();
        let second = client.call(msgs(), &HINT).unwrap();
        assert_eq!(first, second);
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);

        // Temperature is part of the key.
        let hot = client.clone().with_temperature(0.7);
        hot.call(msgs(), &HINT).unwrap();
        assert_eq!(b.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn corrupt_cache_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let request = ChatRequest {
            model: "m".into(),
            temperature: 0.0,
            messages: msgs(),
        };
        let key = ResponseCache::key(&request);
        fs::write(dir.path().join(format!("{key}.json")), b"{not json").unwrap();
        assert!(cache.get(&key).is_none());
    }

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
        };
        let d1 = p.delay(1);
        assert!(d1 >= Duration::from_millis(100) && d1 < Duration::from_millis(200));
        let d3 = p.delay(3);
        assert!(d3 >= Duration::from_millis(350) && d3 < Duration::from_millis(450));
    }

    #[test]
    fn limiter_spaces_calls() {
        let limiter = RateLimiter::per_minute(60_000);
        let start = Instant::now();
        for _ in 0..5 {
            limiter.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(4));
    }

    #[test]
    fn http_response_parsing() {
        let b = HttpChatBackend::new("http://localhost", None, "m", Duration::from_secs(1)).unwrap();
        let body = json!({
            "choices": [{"message": {"role": "assistant", "content": "Ranked order: paper 1"}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 4, "total_tokens": 15}
        });
        let reply = b.parse_response(&body).unwrap();
        assert_eq!(reply.content, "Ranked order: paper 1");
        assert_eq!(
            reply.usage,
            Some(ReportedUsage {
                prompt_tokens: 11,
                completion_tokens: 4
            })
        );
        assert!(b.parse_response(&json!({"choices": []})).is_err());
    }
}
