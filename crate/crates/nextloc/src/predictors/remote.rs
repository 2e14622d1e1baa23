//! Chat-completion HTTP client: bounded concurrency, retry with exponential
//! backoff, requests-per-minute pacing.
//!
//! The wire format is the common chat-completions shape: a POST carrying the
//! model name, a single user message with the prompt text, and the sampling
//! parameters; the answer text is read from `choices[0].message.content` (or
//! a top-level `content`/`output` string). The endpoint URL is configurable
//! so one client covers multiple providers. The API key is resolved from the
//! environment variable named in the config — never from flags or files.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::{BackendConfig, BatchItem, PredictRequest, RawResponse, ResponseCache};
use crate::{Error, Result};

pub(super) struct ChatClient {
    http: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
    model: String,
    sampling: super::SamplingParams,
    max_retries: u32,
    backoff_ms: u64,
}

impl ChatClient {
    pub(super) fn new(config: &BackendConfig) -> Result<Self> {
        if config.api_key_env.is_empty() {
            return Err(Error::Config(
                "remote backend requires api_key_env naming the key variable".into(),
            ));
        }
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| Error::MissingApiKey(config.api_key_env.clone()))?;
        if config.endpoint.is_empty() {
            return Err(Error::Config(
                "remote backend requires an endpoint URL".into(),
            ));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Other(format!("http client: {e}")))?;
        Ok(ChatClient {
            http,
            endpoint: config.endpoint.clone(),
            api_key,
            model: config.model.clone(),
            sampling: config.sampling.clone(),
            max_retries: config.max_retries,
            backoff_ms: config.backoff_ms,
        })
    }

    fn request_body(&self, prompt: &str) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.sampling.temperature,
        });
        let obj = body.as_object_mut().unwrap();
        if let Some(n) = self.sampling.max_new_tokens.or(self.sampling.max_length) {
            obj.insert("max_tokens".into(), n.into());
        }
        if let Some(p) = self.sampling.top_p {
            obj.insert("top_p".into(), p.into());
        }
        if let Some(k) = self.sampling.top_k {
            obj.insert("top_k".into(), k.into());
        }
        if let Some(p) = self.sampling.presence_penalty {
            obj.insert("presence_penalty".into(), p.into());
        }
        body
    }

    /// Issue one completion, retrying transient failures. Rate limiting is
    /// the caller's job (`limiter`), so cache hits never burn budget.
    pub(super) fn complete(&self, prompt: &str, limiter: Option<&RateLimiter>) -> Result<String> {
        let mut attempt = 0;
        loop {
            if let Some(l) = limiter {
                l.acquire();
            }
            match self.try_once(prompt) {
                Ok(text) => return Ok(text),
                Err(Transient::Fatal(e)) => return Err(e),
                Err(Transient::Retryable(msg)) => {
                    if attempt >= self.max_retries {
                        return Err(Error::Other(format!(
                            "request failed after {} attempts: {msg}",
                            attempt + 1
                        )));
                    }
                    let delay = self.backoff_ms.saturating_mul(1 << attempt.min(10));
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        }
    }

    fn try_once(&self, prompt: &str) -> std::result::Result<String, Transient> {
        let response = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&self.request_body(prompt))
            .send()
            .map_err(|e| Transient::Retryable(format!("transport: {e}")))?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(Transient::Fatal(Error::AuthFailure(status.as_u16())));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Transient::Retryable(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(Transient::Fatal(Error::Other(format!(
                "endpoint returned status {status}"
            ))));
        }
        let value: serde_json::Value = response
            .json()
            .map_err(|e| Transient::Retryable(format!("body decode: {e}")))?;
        extract_text(&value)
            .ok_or_else(|| Transient::Retryable("response carried no message content".into()))
    }
}

enum Transient {
    Retryable(String),
    Fatal(Error),
}

fn extract_text(value: &serde_json::Value) -> Option<String> {
    if let Some(content) = value
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
    {
        return Some(content.to_string());
    }
    for key in ["content", "output", "text"] {
        if let Some(s) = value.get(key).and_then(|v| v.as_str()) {
            return Some(s.to_string());
        }
    }
    None
}

/// Spaces request starts so the observed rate never exceeds the configured
/// requests-per-minute cap. Shared across worker threads.
pub(super) struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    pub(super) fn new(requests_per_minute: u32) -> Option<Self> {
        if requests_per_minute == 0 {
            return None;
        }
        Some(RateLimiter {
            interval: Duration::from_secs_f64(60.0 / requests_per_minute as f64),
            next_slot: Mutex::new(Instant::now()),
        })
    }

    fn acquire(&self) {
        let wait = {
            let mut slot = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let at = (*slot).max(now);
            *slot = at + self.interval;
            at.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Fan a request batch over a bounded worker pool. Results land at their
/// request's index, so output order is deterministic. A fatal configuration
/// error (bad credentials) stops scheduling and aborts the whole batch.
pub(super) fn run_remote_batch(
    requests: &[PredictRequest<'_>],
    config: &BackendConfig,
    run_index: u32,
    cache: &ResponseCache,
) -> Result<Vec<BatchItem>> {
    let client = ChatClient::new(config)?; // key resolved before any request
    let limiter = RateLimiter::new(config.requests_per_minute);
    let width = config.concurrency.max(1);
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<Error>> = Mutex::new(None);
    let slots: Vec<Mutex<Option<BatchItem>>> = requests.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..width.min(requests.len().max(1)) {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= requests.len() {
                    return;
                }
                let req = &requests[idx];
                let item = run_one(req, config, run_index, cache, &client, limiter.as_ref());
                match item {
                    Ok(item) => *slots[idx].lock().unwrap() = Some(item),
                    Err(e) => {
                        *fatal.lock().unwrap() = Some(e);
                        abort.store(true, Ordering::SeqCst);
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = fatal.lock().unwrap().take() {
        return Err(e);
    }
    Ok(slots
        .into_iter()
        .enumerate()
        .map(|(idx, slot)| {
            slot.into_inner().unwrap().unwrap_or(BatchItem::Failed {
                instance_id: requests[idx].instance.instance_id.clone(),
                error: "batch aborted".into(),
            })
        })
        .collect())
}

fn run_one(
    req: &PredictRequest<'_>,
    config: &BackendConfig,
    run_index: u32,
    cache: &ResponseCache,
    client: &ChatClient,
    limiter: Option<&RateLimiter>,
) -> Result<BatchItem> {
    let hash = super::request_hash(
        &config.model,
        &req.prompt.content_hash,
        run_index,
        &config.sampling,
    );
    if let Some(mut hit) = cache.get(&hash) {
        hit.instance_id = req.instance.instance_id.clone();
        hit.from_cache = true;
        return Ok(BatchItem::Response(hit));
    }
    let started = Instant::now();
    match client.complete(&req.prompt.text, limiter) {
        Ok(text) => {
            let response = RawResponse {
                instance_id: req.instance.instance_id.clone(),
                model: config.model.clone(),
                run_index,
                text,
                latency_ms: started.elapsed().as_millis() as u64,
                from_cache: false,
                request_hash: hash,
            };
            cache.put(&response)?;
            Ok(BatchItem::Response(response))
        }
        // credential problems poison the whole batch; anything else is an
        // isolated per-instance failure
        Err(e @ Error::AuthFailure(_)) => Err(e),
        Err(e) => Ok(BatchItem::Failed {
            instance_id: req.instance.instance_id.clone(),
            error: e.to_string(),
        }),
    }
}
