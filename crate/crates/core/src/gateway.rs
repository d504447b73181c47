//! Chat-completion client with bounded concurrency and retries, plus a
//! deterministic mock provider for offline runs.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::future::Future;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::parser::ParseOutcome;
use crate::prompting::RenderedPrompt;

/// Fingerprint group for replies that carried none.
pub const UNKNOWN_FINGERPRINT: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// Name of the environment variable holding the API key.
    pub credential_env: String,
    /// First retry delay; doubles per attempt, scaled by a random factor in [0.5, 1.5).
    pub backoff_ms: u64,
    /// Reply fixtures for the mock provider.
    pub mock_replies: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Remote,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            temperature: 0.0,
            timeout_secs: 120.0,
            max_retries: 3,
            max_in_flight: 4,
            credential_env: "OPENAI_API_KEY".into(),
            backoff_ms: 1000,
            mock_replies: None,
        }
    }
}

impl ProviderConfig {
    pub fn mock(replies: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            model: "mock".into(),
            backoff_ms: 0,
            mock_replies: Some(replies.into()),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight < 1 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::Config(format!(
                "timeout must be positive, got {}",
                self.timeout_secs
            )));
        }
        if self.model.trim().is_empty() {
            return Err(Error::Config("model name is empty".into()));
        }
        match self.kind {
            ProviderKind::Remote => {
                let url = reqwest::Url::parse(&self.endpoint)
                    .map_err(|e| Error::Config(format!("bad endpoint URL {}: {e}", self.endpoint)))?;
                if !matches!(url.scheme(), "http" | "https") {
                    return Err(Error::Config(format!("endpoint must be http(s): {}", self.endpoint)));
                }
                self.credential()?;
            }
            ProviderKind::Mock => {
                if self.mock_replies.is_none() {
                    return Err(Error::Config("mock provider needs a replies file".into()));
                }
            }
        }
        Ok(())
    }

    fn credential(&self) -> Result<String> {
        match std::env::var(&self.credential_env) {
            Ok(v) if !v.trim().is_empty() => Ok(v),
            _ => Err(Error::Config(format!(
                "credential variable {} is not set",
                self.credential_env
            ))),
        }
    }
}

/// One prompt to send, tagged with its segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptRequest {
    pub segment_id: String,
    pub prompt: RenderedPrompt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    TransportError,
    Refusal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub segment_id: String,
    pub model: String,
    pub system_fingerprint: Option<String>,
    pub raw_text: String,
    pub latency_ms: u64,
    pub attempts: u32,
    pub status: ResponseStatus,
}

/// Outcome of a single request attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum Attempt {
    Reply {
        text: String,
        model: Option<String>,
        fingerprint: Option<String>,
        /// Latency the provider reports; `None` means measure wall time.
        latency_ms: Option<u64>,
    },
    Refusal {
        text: String,
        fingerprint: Option<String>,
    },
    /// Worth retrying (timeouts, 429, 5xx, dropped connections).
    Transient(String),
    /// Not worth retrying (4xx other than 429).
    Fatal(String),
}

pub trait Provider: Send + Sync {
    fn complete(&self, req: &PromptRequest) -> impl Future<Output = Attempt> + Send;
}

/// OpenAI-style chat-completions endpoint.
pub struct RemoteProvider {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    temperature: f64,
    credential: String,
}

impl RemoteProvider {
    pub fn new(cfg: &ProviderConfig) -> Result<Self> {
        cfg.validate()?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(RemoteProvider {
            client,
            endpoint: cfg.endpoint.clone(),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            credential: cfg.credential()?,
        })
    }

    fn body(&self, prompt: &RenderedPrompt) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &prompt.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": prompt.user}));
        json!({"model": self.model, "messages": messages, "temperature": self.temperature})
    }
}

/// Read a chat-completions response body.
pub fn read_completion(body: &Value) -> Attempt {
    let fingerprint = body["system_fingerprint"].as_str().map(str::to_string);
    let model = body["model"].as_str().map(str::to_string);
    let choice = &body["choices"][0];
    let message = &choice["message"];
    let text = message["content"].as_str().unwrap_or("").to_string();
    if let Some(refusal) = message["refusal"].as_str() {
        return Attempt::Refusal {
            text: refusal.to_string(),
            fingerprint,
        };
    }
    if choice["finish_reason"].as_str() == Some("content_filter") {
        return Attempt::Refusal { text, fingerprint };
    }
    if choice.is_null() {
        return Attempt::Transient("response has no choices".into());
    }
    Attempt::Reply {
        text,
        model,
        fingerprint,
        latency_ms: None,
    }
}

impl Provider for RemoteProvider {
    async fn complete(&self, req: &PromptRequest) -> Attempt {
        let sent = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.credential)
            .json(&self.body(&req.prompt))
            .send()
            .await;
        let resp = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Transient(format!("HTTP {status}"));
        }
        if !status.is_success() {
            return Attempt::Fatal(format!("HTTP {status}"));
        }
        match resp.json::<Value>().await {
            Ok(body) => read_completion(&body),
            Err(e) => Attempt::Transient(format!("bad response body: {e}")),
        }
    }
}

/// One canned reply. `key` is a prompt hash or a segment id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockReply {
    pub key: String,
    #[serde(default)]
    pub reply: String,
    #[serde(default)]
    pub system_fingerprint: Option<String>,
    /// Transient failures before the reply is served.
    #[serde(default)]
    pub fail_times: u32,
    #[serde(default)]
    pub always_fail: bool,
    #[serde(default)]
    pub refusal: bool,
}

/// Replays canned replies. Replies are looked up by prompt hash first, then
/// by segment id. Reported latency is always 0, so outputs are
/// byte-identical across runs.
pub struct MockProvider {
    model: String,
    replies: HashMap<String, MockReply>,
    delay: Duration,
    calls: Mutex<HashMap<String, u32>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl MockProvider {
    pub fn new(model: impl Into<String>, replies: Vec<MockReply>) -> Self {
        MockProvider {
            model: model.into(),
            replies: replies.into_iter().map(|r| (r.key.clone(), r)).collect(),
            delay: Duration::ZERO,
            calls: Mutex::new(HashMap::new()),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn from_file(model: impl Into<String>, path: &Path) -> Result<Self> {
        Ok(Self::new(model, crate::data_io::read_jsonl(path)?))
    }

    /// Hold every request for `delay` (for concurrency tests).
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Highest number of requests seen in flight at once.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn lookup(&self, req: &PromptRequest) -> Option<&MockReply> {
        self.replies
            .get(&req.prompt.hash())
            .or_else(|| self.replies.get(&req.segment_id))
    }
}

impl Provider for MockProvider {
    async fn complete(&self, req: &PromptRequest) -> Attempt {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        let call = {
            let mut calls = self.calls.lock().expect("mock call counter");
            let n = calls.entry(req.segment_id.clone()).or_insert(0);
            *n += 1;
            *n
        };
        let out = match self.lookup(req) {
            None => Attempt::Fatal(format!("no mock reply for segment {}", req.segment_id)),
            Some(r) if r.always_fail || call <= r.fail_times => Attempt::Transient("injected failure".into()),
            Some(r) if r.refusal => Attempt::Refusal {
                text: r.reply.clone(),
                fingerprint: r.system_fingerprint.clone(),
            },
            Some(r) => Attempt::Reply {
                text: r.reply.clone(),
                model: Some(self.model.clone()),
                fingerprint: r.system_fingerprint.clone(),
                latency_ms: Some(0),
            },
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        out
    }
}

fn backoff(base_ms: u64, attempt: u32) -> Duration {
    if base_ms == 0 {
        return Duration::ZERO;
    }
    let exp = base_ms.saturating_mul(1u64 << (attempt - 1).min(16));
    let jitter: f64 = rand::rng().random_range(0.5..1.5);
    Duration::from_millis((exp as f64 * jitter) as u64)
}

async fn run_one<P: Provider>(provider: &P, cfg: &ProviderConfig, req: &PromptRequest) -> RawResponse {
    let timeout = Duration::from_secs_f64(cfg.timeout_secs);
    let mut out = RawResponse {
        segment_id: req.segment_id.clone(),
        model: cfg.model.clone(),
        system_fingerprint: None,
        raw_text: String::new(),
        latency_ms: 0,
        attempts: 0,
        status: ResponseStatus::TransportError,
    };
    let max_attempts = cfg.max_retries + 1;
    for attempt in 1..=max_attempts {
        out.attempts = attempt;
        let started = Instant::now();
        let result = tokio::time::timeout(timeout, provider.complete(req))
            .await
            .unwrap_or_else(|_| Attempt::Transient("timed out".into()));
        let elapsed = started.elapsed().as_millis() as u64;
        match result {
            Attempt::Reply {
                text,
                model,
                fingerprint,
                latency_ms,
            } if !text.trim().is_empty() => {
                out.raw_text = text;
                out.model = model.unwrap_or(out.model);
                out.system_fingerprint = fingerprint;
                out.latency_ms = latency_ms.unwrap_or(elapsed);
                out.status = ResponseStatus::Ok;
                return out;
            }
            Attempt::Refusal { text, fingerprint } => {
                out.raw_text = text;
                out.system_fingerprint = fingerprint;
                out.latency_ms = elapsed;
                out.status = ResponseStatus::Refusal;
                return out;
            }
            Attempt::Fatal(msg) => {
                out.raw_text = msg;
                return out;
            }
            Attempt::Reply { .. } => out.raw_text = "empty reply".into(),
            Attempt::Transient(msg) => out.raw_text = msg,
        }
        if attempt < max_attempts {
            tokio::time::sleep(backoff(cfg.backoff_ms, attempt)).await;
        }
    }
    out
}

/// Send every prompt through `provider`, at most `cfg.max_in_flight` at a
/// time. Output order follows input order; failures after all retries come
/// back as `TransportError` entries.
pub async fn run_batch<P: Provider>(provider: &P, cfg: &ProviderConfig, prompts: &[PromptRequest]) -> Vec<RawResponse> {
    stream::iter(prompts.iter().map(|p| run_one(provider, cfg, p)))
        .buffered(cfg.max_in_flight)
        .collect()
        .await
}

/// Validate `cfg`, build its provider, and run the batch.
pub async fn annotate_batch(cfg: &ProviderConfig, prompts: &[PromptRequest]) -> Result<Vec<RawResponse>> {
    if prompts.is_empty() {
        return Err(Error::EmptyInput);
    }
    cfg.validate()?;
    match cfg.kind {
        ProviderKind::Remote => {
            let p = RemoteProvider::new(cfg)?;
            Ok(run_batch(&p, cfg, prompts).await)
        }
        ProviderKind::Mock => {
            let path = cfg.mock_replies.as_ref().expect("validated");
            let p = MockProvider::from_file(cfg.model.clone(), path)?;
            Ok(run_batch(&p, cfg, prompts).await)
        }
    }
}

/// Fraction of replies whose parse succeeded.
pub fn parse_rate(responses: &[RawResponse], outcomes: &[ParseOutcome]) -> Result<f64> {
    if responses.len() != outcomes.len() {
        return Err(Error::Contract(format!(
            "{} responses but {} parse results",
            responses.len(),
            outcomes.len()
        )));
    }
    if responses.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (r, o) in responses.iter().zip(outcomes) {
        if r.segment_id != o.segment_id {
            return Err(Error::Contract(format!(
                "response {} aligned with parse result {}",
                r.segment_id, o.segment_id
            )));
        }
    }
    let parsed = outcomes.iter().filter(|o| o.is_parsed()).count();
    Ok(parsed as f64 / outcomes.len() as f64)
}

/// Segment ids grouped by backend fingerprint, in response order.
pub fn group_by_fingerprint(responses: &[RawResponse]) -> BTreeMap<String, Vec<String>> {
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in responses {
        let key = r.system_fingerprint.as_deref().unwrap_or(UNKNOWN_FINGERPRINT);
        groups.entry(key.to_string()).or_default().push(r.segment_id.clone());
    }
    groups
}

/// Append-only response ledger.
pub struct Ledger {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Ledger {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Ledger {
            out: BufWriter::new(file),
            path,
        })
    }

    pub fn append(&mut self, responses: &[RawResponse]) -> Result<()> {
        for r in responses {
            let line = serde_json::to_string(r).expect("response serializes");
            writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))?;
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Latest ledger entry per segment; later lines supersede earlier ones.
pub fn latest_responses(entries: Vec<RawResponse>) -> HashMap<String, RawResponse> {
    entries.into_iter().map(|r| (r.segment_id.clone(), r)).collect()
}
