//! Predictor backends: remote chat-completion endpoints and deterministic
//! offline oracles, behind one batch interface with response caching, retry,
//! and rate limiting.

mod cache;
mod oracles;
mod remote;

pub use cache::ResponseCache;
pub use oracles::{frequency_oracle, markov1_oracle, recency_oracle};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::instances::PredictionInstance;
use crate::prompts::RenderedPrompt;
use crate::{Error, Result};

/// What answers the prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    RemoteChat,
    FrequencyOracle,
    RecencyOracle,
    Markov1Oracle,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remote-chat" | "remote" => Ok(BackendKind::RemoteChat),
            "frequency-oracle" | "frequency" => Ok(BackendKind::FrequencyOracle),
            "recency-oracle" | "recency" => Ok(BackendKind::RecencyOracle),
            "markov1-oracle" | "markov1" => Ok(BackendKind::Markov1Oracle),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

impl BackendKind {
    pub fn is_oracle(&self) -> bool {
        !matches!(self, BackendKind::RemoteChat)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::RemoteChat => "remote-chat",
            BackendKind::FrequencyOracle => "frequency-oracle",
            BackendKind::RecencyOracle => "recency-oracle",
            BackendKind::Markov1Oracle => "markov1-oracle",
        }
    }
}

/// Sampling parameters sent with remote requests; all part of the cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_new_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_length: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_penalty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub presence_penalty: Option<f64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.01,
            max_new_tokens: Some(150),
            max_tokens: None,
            max_length: None,
            top_p: None,
            top_k: None,
            length_penalty: None,
            presence_penalty: None,
        }
    }
}

/// Per-family sampling profiles, keyed by model-name substring. Everything
/// runs at temperature 0.01; token caps differ per family and are stored per
/// profile as-is without reconciling their inconsistencies.
pub fn default_profile(model: &str) -> SamplingParams {
    let m = model.to_ascii_lowercase();
    let base = SamplingParams {
        temperature: 0.01,
        max_new_tokens: None,
        ..SamplingParams::default()
    };
    if m.contains("gpt-4") || m.contains("gpt-3.5") {
        SamplingParams {
            max_new_tokens: Some(150),
            max_tokens: Some(1000),
            ..base
        }
    } else if m.contains("mistral") {
        SamplingParams {
            max_new_tokens: Some(128),
            top_p: Some(0.95),
            top_k: Some(50),
            length_penalty: Some(1.0),
            presence_penalty: Some(0.0),
            ..base
        }
    } else if m.contains("phi") {
        SamplingParams {
            max_length: Some(500),
            ..base
        }
    } else if m.contains("llama") && (m.contains("instruct") || m.contains("chat")) {
        SamplingParams {
            max_new_tokens: Some(200),
            ..base
        }
    } else if m.contains("llama") {
        SamplingParams {
            max_new_tokens: Some(200),
            top_p: Some(0.95),
            top_k: Some(250),
            length_penalty: Some(1.0),
            presence_penalty: Some(0.0),
            ..base
        }
    } else {
        SamplingParams {
            max_new_tokens: Some(200),
            ..base
        }
    }
}

/// Full backend configuration. Oracle kinds ignore the network fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model: String,
    pub endpoint: String,
    /// Name of the environment variable holding the API key (never the key
    /// itself).
    pub api_key_env: String,
    pub sampling: SamplingParams,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Requests-per-minute cap; 0 disables rate limiting.
    pub requests_per_minute: u32,
    /// Maximum in-flight requests.
    pub concurrency: usize,
    /// Base backoff for retries (doubles per attempt).
    pub backoff_ms: u64,
}

impl BackendConfig {
    pub fn oracle(kind: BackendKind) -> Self {
        BackendConfig {
            kind,
            model: kind.as_str().to_string(),
            endpoint: String::new(),
            api_key_env: String::new(),
            sampling: SamplingParams::default(),
            timeout_secs: 60,
            max_retries: 3,
            requests_per_minute: 0,
            concurrency: 4,
            backoff_ms: 500,
        }
    }

    pub fn remote(model: &str, endpoint: &str, api_key_env: &str) -> Self {
        BackendConfig {
            kind: BackendKind::RemoteChat,
            model: model.to_string(),
            endpoint: endpoint.to_string(),
            api_key_env: api_key_env.to_string(),
            sampling: default_profile(model),
            timeout_secs: 60,
            max_retries: 3,
            requests_per_minute: 0,
            concurrency: 4,
            backoff_ms: 500,
        }
    }
}

/// One model answer, verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub instance_id: String,
    pub model: String,
    pub run_index: u32,
    pub text: String,
    pub latency_ms: u64,
    pub from_cache: bool,
    pub request_hash: String,
}

/// The prompt plus the instance it was rendered from (oracles answer from
/// the instance windows, not the text).
#[derive(Debug, Clone)]
pub struct PredictRequest<'a> {
    pub instance: &'a PredictionInstance,
    pub prompt: RenderedPrompt,
}

/// Identity of a request: model, prompt content, run index, sampling params.
pub fn request_hash(
    model: &str,
    content_hash: &str,
    run_index: u32,
    sampling: &SamplingParams,
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model.as_bytes());
    hasher.update([0]);
    hasher.update(content_hash.as_bytes());
    hasher.update([0]);
    hasher.update(run_index.to_le_bytes());
    hasher.update(
        serde_json::to_string(sampling)
            .expect("sampling params serialize")
            .as_bytes(),
    );
    let digest = hasher.finalize();
    digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
}

/// Per-instance batch outcome. Failures are data, not errors: one bad
/// instance never aborts the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BatchItem {
    Response(RawResponse),
    Failed { instance_id: String, error: String },
}

impl BatchItem {
    pub fn response(&self) -> Option<&RawResponse> {
        match self {
            BatchItem::Response(r) => Some(r),
            BatchItem::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Default)]
pub struct BatchOutcome {
    /// One item per request, in request order.
    pub items: Vec<BatchItem>,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub failures: usize,
}

/// Answer one prompt. The cache is consulted first; oracles compute their
/// answer from the instance windows; the remote path issues a chat request.
pub fn predict(
    request: &PredictRequest<'_>,
    config: &BackendConfig,
    run_index: u32,
    cache: &ResponseCache,
) -> Result<RawResponse> {
    let hash = request_hash(
        &config.model,
        &request.prompt.content_hash,
        run_index,
        &config.sampling,
    );
    if let Some(mut hit) = cache.get(&hash) {
        // the cache maps request content to response text; the envelope
        // belongs to the current request (identical prompts from different
        // instances or ablation arms share an entry)
        hit.instance_id = request.instance.instance_id.clone();
        hit.from_cache = true;
        return Ok(hit);
    }
    let started = Instant::now();
    let text = match config.kind {
        BackendKind::FrequencyOracle => {
            oracle_answer(frequency_oracle(request.instance), "visit frequency")
        }
        BackendKind::RecencyOracle => {
            oracle_answer(recency_oracle(request.instance), "recency of visits")
        }
        BackendKind::Markov1Oracle => oracle_answer(
            markov1_oracle(request.instance),
            "transition counts from the current location with frequency backoff",
        ),
        BackendKind::RemoteChat => {
            let client = remote::ChatClient::new(config)?;
            client.complete(&request.prompt.text, None)?
        }
    };
    let response = RawResponse {
        instance_id: request.instance.instance_id.clone(),
        model: config.model.clone(),
        run_index,
        text,
        latency_ms: started.elapsed().as_millis() as u64,
        from_cache: false,
        request_hash: hash,
    };
    cache.put(&response)?;
    Ok(response)
}

fn oracle_answer(ids: Vec<String>, basis: &str) -> String {
    serde_json::json!({
        "prediction": ids,
        "reason": format!("Ranked by {basis} over the user's historical and contextual stays."),
    })
    .to_string()
}

/// Answer a whole batch. Results come back in request order regardless of
/// completion order; per-instance failures are tallied, and only
/// configuration problems (missing key, rejected credentials) abort.
pub fn run_batch(
    requests: &[PredictRequest<'_>],
    config: &BackendConfig,
    run_index: u32,
    cache: &ResponseCache,
) -> Result<BatchOutcome> {
    if config.kind.is_oracle() {
        let items: Vec<BatchItem> = crate::par::map_collect(requests, |req| {
            match predict(req, config, run_index, cache) {
                Ok(r) => BatchItem::Response(r),
                Err(e) => BatchItem::Failed {
                    instance_id: req.instance.instance_id.clone(),
                    error: e.to_string(),
                },
            }
        });
        return Ok(finish_batch(items));
    }
    remote::run_remote_batch(requests, config, run_index, cache).map(finish_batch)
}

fn finish_batch(items: Vec<BatchItem>) -> BatchOutcome {
    let mut outcome = BatchOutcome {
        items,
        ..Default::default()
    };
    for item in &outcome.items {
        match item {
            BatchItem::Response(r) if r.from_cache => outcome.cache_hits += 1,
            BatchItem::Response(_) => outcome.cache_misses += 1,
            BatchItem::Failed { .. } => outcome.failures += 1,
        }
    }
    outcome
}
