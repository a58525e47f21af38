//! Chat backend wire format, transports and retry policy.
//!
//! Request: `{model, messages: [{role: "user", content: [parts]}], max_tokens, ..sampling}`
//! where a part is `{"type": "text", "text"}` or `{"type": "image", "id", "source", "region"?}`.
//! Response: `{content}`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CropRegion, ImageRef};
use crate::prompt::{PromptDocument, Segment, CLUE_HEADER};

pub const MAX_RETRY_LIMIT: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {last}")]
    BackendUnavailable { attempts: u32, last: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("invalid backend endpoint: {0}")]
    InvalidEndpoint(String),
}

/// Failure of a single transport attempt. Only `Transient` is retried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Transient(String),
    Rejected(String),
    Malformed(String),
}

impl TransportError {
    fn message(&self) -> &str {
        match self {
            TransportError::Transient(m)
            | TransportError::Rejected(m)
            | TransportError::Malformed(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendEndpoint {
    pub locator: String,
    pub model: String,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    /// Passed through verbatim as extra request fields (temperature, top_p, ...).
    #[serde(default)]
    pub sampling: BTreeMap<String, serde_json::Value>,
}

fn default_max_output_tokens() -> u32 {
    128
}
fn default_timeout_ms() -> u64 {
    60_000
}
fn default_retry_limit() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    250
}

impl BackendEndpoint {
    pub fn new(locator: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            locator: locator.into(),
            model: model.into(),
            max_output_tokens: default_max_output_tokens(),
            timeout_ms: default_timeout_ms(),
            retry_limit: default_retry_limit(),
            backoff_base_ms: default_backoff_ms(),
            sampling: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.retry_limit > MAX_RETRY_LIMIT {
            return Err(BackendError::InvalidEndpoint(format!(
                "retry_limit {} exceeds {MAX_RETRY_LIMIT}",
                self.retry_limit
            )));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::InvalidEndpoint(
                "timeout_ms must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text {
        text: String,
    },
    Image {
        id: String,
        source: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<CropRegion>,
    },
}

impl ContentPart {
    fn image(img: &ImageRef) -> Self {
        ContentPart::Image {
            id: img.id.clone(),
            source: img.source.clone(),
            region: img.region,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Vec<ContentPart>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
    #[serde(flatten)]
    pub sampling: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
}

/// Message parts for a prompt document, in segment order. Object crops follow
/// the text segment that introduces their placeholders.
pub fn document_parts(doc: &PromptDocument) -> Vec<ContentPart> {
    doc.segments
        .iter()
        .map(|s| match s {
            Segment::ImageSlot(img) | Segment::ObjectSlot(img) => ContentPart::image(img),
            Segment::Text(t) => ContentPart::Text { text: t.clone() },
        })
        .collect()
}

pub fn build_request(endpoint: &BackendEndpoint, doc: &PromptDocument) -> ChatRequest {
    ChatRequest {
        model: endpoint.model.clone(),
        messages: vec![ChatMessage {
            role: "user".into(),
            content: document_parts(doc),
        }],
        max_tokens: endpoint.max_output_tokens,
        sampling: endpoint.sampling.clone(),
    }
}

pub trait ChatTransport: Send + Sync {
    fn send(
        &self,
        request: &ChatRequest,
        timeout: Duration,
    ) -> Result<ChatResponse, TransportError>;
}

/// A backend endpoint together with the transport that reaches it.
#[derive(Clone)]
pub struct Backend {
    pub endpoint: BackendEndpoint,
    transport: Arc<dyn ChatTransport>,
}

impl Backend {
    pub fn new(endpoint: BackendEndpoint, transport: Arc<dyn ChatTransport>) -> Self {
        Self {
            endpoint,
            transport,
        }
    }

    pub fn http(endpoint: BackendEndpoint) -> Self {
        let transport = Arc::new(HttpChatTransport::new(endpoint.locator.clone()));
        Self::new(endpoint, transport)
    }
}

/// Send `doc` and return the reply content, retrying transient failures with
/// exponential backoff (`backoff_base_ms * 2^n`) up to `retry_limit` times.
pub fn call_backend(backend: &Backend, doc: &PromptDocument) -> Result<String, BackendError> {
    let ep = &backend.endpoint;
    ep.validate()?;
    let request = build_request(ep, doc);
    let timeout = Duration::from_millis(ep.timeout_ms);
    let mut attempts = 0;
    loop {
        attempts += 1;
        match backend.transport.send(&request, timeout) {
            Ok(resp) => return Ok(resp.content),
            Err(TransportError::Malformed(m)) => return Err(BackendError::MalformedResponse(m)),
            Err(e @ TransportError::Rejected(_)) => {
                return Err(BackendError::BackendUnavailable {
                    attempts,
                    last: e.message().to_string(),
                })
            }
            Err(e) if attempts > ep.retry_limit => {
                return Err(BackendError::BackendUnavailable {
                    attempts,
                    last: e.message().to_string(),
                })
            }
            Err(e) => {
                let delay = ep.backoff_base_ms.saturating_mul(1 << (attempts - 1));
                tracing::debug!(
                    attempt = attempts,
                    delay_ms = delay,
                    error = e.message(),
                    "retrying backend call"
                );
                std::thread::sleep(Duration::from_millis(delay));
            }
        }
    }
}

pub struct HttpChatTransport {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpChatTransport {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl ChatTransport for HttpChatTransport {
    fn send(
        &self,
        request: &ChatRequest,
        timeout: Duration,
    ) -> Result<ChatResponse, TransportError> {
        let resp = self
            .client
            .post(&self.url)
            .timeout(timeout)
            .json(request)
            .send()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(TransportError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(TransportError::Rejected(format!("HTTP {status}")));
        }
        resp.json::<ChatResponse>()
            .map_err(|e| TransportError::Malformed(e.to_string()))
    }
}

/// Scripted replies for one image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    pub image_id: String,
    pub round1: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round2: Option<String>,
    /// Transient failures to report before the first success.
    #[serde(default)]
    pub fail_first: u32,
    #[serde(default)]
    pub always_fail: bool,
}

/// Deterministic backend for tests and offline runs.
///
/// Replies are keyed by the id of the request's first image; a request is a
/// second-round request when any text part carries the clue header. Scripts
/// are stateless apart from the transient-failure counters, so samples may run
/// in any order or in parallel.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    scripts: HashMap<String, Script>,
    failures: Mutex<HashMap<String, u32>>,
}

impl ScriptedBackend {
    pub fn new(scripts: impl IntoIterator<Item = Script>) -> Self {
        Self {
            scripts: scripts
                .into_iter()
                .map(|s| (s.image_id.clone(), s))
                .collect(),
            failures: Mutex::new(HashMap::new()),
        }
    }

    /// One JSON [`Script`] per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut scripts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let s: Script = serde_json::from_str(line)
                .map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
            scripts.push(s);
        }
        Ok(Self::new(scripts))
    }
}

impl ChatTransport for ScriptedBackend {
    fn send(
        &self,
        request: &ChatRequest,
        _timeout: Duration,
    ) -> Result<ChatResponse, TransportError> {
        let parts = request
            .messages
            .last()
            .map(|m| m.content.as_slice())
            .unwrap_or_default();
        let image_id = parts
            .iter()
            .find_map(|p| match p {
                ContentPart::Image { id, .. } => Some(id.clone()),
                _ => None,
            })
            .ok_or_else(|| TransportError::Rejected("request carries no image".into()))?;
        let script = self
            .scripts
            .get(&image_id)
            .ok_or_else(|| TransportError::Rejected(format!("no script for image `{image_id}`")))?;
        if script.always_fail {
            return Err(TransportError::Transient("scripted outage".into()));
        }
        {
            let mut failures = self.failures.lock().expect("failure counter poisoned");
            let seen = failures.entry(image_id.clone()).or_default();
            if *seen < script.fail_first {
                *seen += 1;
                return Err(TransportError::Transient(
                    "scripted transient failure".into(),
                ));
            }
        }
        let round_two = parts
            .iter()
            .any(|p| matches!(p, ContentPart::Text { text } if text.contains(CLUE_HEADER)));
        let content = if round_two {
            script.round2.clone().ok_or_else(|| {
                TransportError::Rejected(format!("no round-two reply scripted for `{image_id}`"))
            })?
        } else {
            script.round1.clone()
        };
        Ok(ChatResponse { content })
    }
}
