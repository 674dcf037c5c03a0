//! Chat-completion client contract with record/replay.
//!
//! The teacher model behind dataset generation is abstracted as
//! [`LlmClient`]. [`HttpChatClient`] speaks the common
//! `/v1/chat/completions` shape; [`RecordingClient`] saves every exchange as
//! a cassette file keyed by the request hash; [`ReplayClient`] serves only
//! from cassettes, so tests and CI never need model access.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("llm transport failed: {0}")]
    Transport(String),
    #[error("llm endpoint returned HTTP {0}")]
    Http(u16),
    #[error("llm response malformed: {0}")]
    MalformedResponse(String),
    #[error("llm returned an empty completion")]
    EmptyCompletion,
    #[error("no cassette recorded for request {key}")]
    CassetteMiss { key: String },
    #[error("cassette {path} unreadable: {source}")]
    CassetteIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub finish_reason: FinishReason,
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

impl<C: LlmClient + ?Sized> LlmClient for Box<C> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (**self).complete(request)
    }
}

/// Stable cassette key: SHA-256 of the canonical request JSON.
pub fn request_key(request: &LlmRequest) -> String {
    let canonical = serde_json::to_string(request).expect("request serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

#[derive(Serialize, Deserialize)]
struct Cassette {
    request: LlmRequest,
    response: LlmResponse,
}

fn cassette_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.json"))
}

/// Serves completions from recorded cassettes only; a missing cassette is an
/// error rather than a network call.
pub struct ReplayClient {
    dir: PathBuf,
}

impl ReplayClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayClient { dir: dir.into() }
    }
}

impl LlmClient for ReplayClient {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let key = request_key(request);
        let path = cassette_path(&self.dir, &key);
        if !path.exists() {
            return Err(LlmError::CassetteMiss { key });
        }
        let text = std::fs::read_to_string(&path).map_err(|e| LlmError::CassetteIo {
            path: path.display().to_string(),
            source: e,
        })?;
        let cassette: Cassette = serde_json::from_str(&text)
            .map_err(|e| LlmError::MalformedResponse(format!("{}: {e}", path.display())))?;
        Ok(cassette.response)
    }
}

/// Wraps any client and records each exchange as a cassette for later replay.
pub struct RecordingClient<C> {
    inner: C,
    dir: PathBuf,
}

impl<C: LlmClient> RecordingClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Self {
        RecordingClient {
            inner,
            dir: dir.into(),
        }
    }
}

impl<C: LlmClient> LlmClient for RecordingClient<C> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let response = self.inner.complete(request)?;
        let key = request_key(request);
        let path = cassette_path(&self.dir, &key);
        let cassette = Cassette {
            request: request.clone(),
            response: response.clone(),
        };
        let body = serde_json::to_string_pretty(&cassette).expect("cassette serializes");
        std::fs::create_dir_all(&self.dir).map_err(|e| LlmError::CassetteIo {
            path: self.dir.display().to_string(),
            source: e,
        })?;
        // write-temp-then-rename keeps concurrent replays from seeing a torn file
        let tmp = self.dir.join(format!(".tmp-{key}"));
        std::fs::write(&tmp, body.as_bytes()).map_err(|e| LlmError::CassetteIo {
            path: tmp.display().to_string(),
            source: e,
        })?;
        std::fs::rename(&tmp, &path).map_err(|e| LlmError::CassetteIo {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(response)
    }
}

/// Spaces out requests to at least `min_interval` apart.
pub struct RateLimitedClient<C> {
    inner: C,
    min_interval: Duration,
    last_call: Mutex<Option<Instant>>,
}

impl<C: LlmClient> RateLimitedClient<C> {
    pub fn new(inner: C, min_interval: Duration) -> Self {
        RateLimitedClient {
            inner,
            min_interval,
            last_call: Mutex::new(None),
        }
    }
}

impl<C: LlmClient> LlmClient for RateLimitedClient<C> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        if !self.min_interval.is_zero() {
            let wait = {
                let mut last = self.last_call.lock().expect("rate limiter lock");
                let now = Instant::now();
                let wait = match *last {
                    Some(prev) => self.min_interval.saturating_sub(now - prev),
                    None => Duration::ZERO,
                };
                *last = Some(now + wait);
                wait
            };
            if !wait.is_zero() {
                std::thread::sleep(wait);
            }
        }
        self.inner.complete(request)
    }
}

/// Client backed by a plain function; handy for tests and scripted teachers.
pub struct FnClient<F>(pub F);

impl<F> LlmClient for FnClient<F>
where
    F: Fn(&LlmRequest) -> Result<LlmResponse, LlmError> + Send + Sync,
{
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (self.0)(request)
    }
}

/// Live HTTP client for `/v1/chat/completions`-shaped endpoints.
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
    ) -> Self {
        HttpChatClient {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            agent: ureq::Agent::new_with_defaults(),
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

impl LlmClient for HttpChatClient {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let body = ChatRequest {
            model: &self.model,
            messages: vec![ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut http = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            http = http.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = http.send_json(&body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => LlmError::Http(code),
            other => LlmError::Transport(other.to_string()),
        })?;
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::MalformedResponse("no choices".to_string()))?;
        if choice.message.content.is_empty() {
            return Err(LlmError::EmptyCompletion);
        }
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("stop") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Other,
        };
        Ok(LlmResponse {
            text: choice.message.content,
            finish_reason,
        })
    }
}
