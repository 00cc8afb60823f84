use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{PromptBundle, PromptSegment};
use crate::model::{QueryRecord, Stage, WebsiteLabel};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failure calling {endpoint}: {message}")]
    Transport { endpoint: String, status: Option<u16>, message: String },
    #[error("malformed response from {endpoint}: {message}")]
    BadResponse { endpoint: String, message: String },
    #[error("{endpoint} accepts at most {max} images, prompt has {got}")]
    TooManyImages { endpoint: String, max: usize, got: usize },
    #[error("no scripted response for query {query_id}, stage {stage}, attempt {attempt}")]
    StubMiss { query_id: String, stage: Stage, attempt: u32 },
    #[error("no ground truth for query {0}")]
    OracleMiss(String),
    #[error("cannot load stub script {path}: {message}")]
    Script { path: String, message: String },
    #[error("model endpoint not configured: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn is_transport(&self) -> bool {
        matches!(self, GatewayError::Transport { .. } | GatewayError::BadResponse { .. })
    }
}

/// One call to a model: the prompt plus the identifiers stubs key on.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub query_id: &'a str,
    pub stage: Stage,
    /// 0 for standard runs; the sample index in test-time-compute runs.
    pub attempt: u32,
    pub temperature: f64,
    pub bundle: &'a PromptBundle,
    /// URLs of the websites shown to a rerank prompt, in prompt order.
    pub candidate_urls: &'a [String],
}

pub trait LanguageModel: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub name: String,
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub model: String,
    #[serde(default)]
    pub max_images: Option<usize>,
    #[serde(default)]
    pub max_context_hint: Option<usize>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_concurrency() -> usize {
    2
}

fn default_timeout() -> u64 {
    120
}

impl ModelEndpoint {
    /// Reads `LMM_API_BASE`, `LMM_MODEL` and (lazily) `LMM_API_KEY`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let var = |name: &str| std::env::var(name).map_err(|_| GatewayError::Config(format!("{name} is not set")));
        let model = var("LMM_MODEL")?;
        Ok(ModelEndpoint {
            name: model.clone(),
            base_url: var("LMM_API_BASE")?,
            api_key_env: "LMM_API_KEY".into(),
            model,
            max_images: None,
            max_context_hint: None,
            max_concurrency: default_concurrency(),
            timeout_secs: default_timeout(),
        })
    }
}

struct Semaphore {
    free: Mutex<usize>,
    ready: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore { free: Mutex::new(n.max(1)), ready: Condvar::new() }
    }

    fn run<R>(&self, f: impl FnOnce() -> R) -> R {
        {
            let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
            while *free == 0 {
                free = self.ready.wait(free).unwrap_or_else(|p| p.into_inner());
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.ready.notify_one();
        out
    }
}

fn mime_of(bytes: &[u8]) -> &'static str {
    match bytes {
        [0x89, b'P', b'N', b'G', ..] => "image/png",
        [0xFF, 0xD8, ..] => "image/jpeg",
        [b'G', b'I', b'F', ..] => "image/gif",
        _ => "application/octet-stream",
    }
}

/// Single-turn chat completion with interleaved text and image parts.
pub fn chat_request_body(model: &str, temperature: f64, bundle: &PromptBundle) -> std::io::Result<Value> {
    let mut parts = Vec::new();
    for segment in &bundle.segments {
        match segment {
            PromptSegment::Text(text) => parts.push(json!({ "type": "text", "text": text })),
            PromptSegment::Image(img) => {
                let bytes = img.encoded()?;
                let data = base64::engine::general_purpose::STANDARD.encode(&bytes);
                let url = format!("data:{};base64,{data}", mime_of(&bytes));
                parts.push(json!({ "type": "image_url", "image_url": { "url": url } }));
            }
        }
    }
    Ok(json!({
        "model": model,
        "temperature": temperature,
        "messages": [{ "role": "user", "content": parts }],
    }))
}

/// Any server speaking the OpenAI-style `/chat/completions` protocol.
pub struct OpenAiCompatible {
    endpoint: ModelEndpoint,
    agent: ureq::Agent,
    gate: Semaphore,
}

impl OpenAiCompatible {
    pub fn new(endpoint: ModelEndpoint) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(endpoint.timeout_secs)))
            .build();
        let gate = Semaphore::new(endpoint.max_concurrency);
        OpenAiCompatible { endpoint, agent: ureq::Agent::new_with_config(config), gate }
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    fn transport(&self, status: Option<u16>, message: impl Into<String>) -> GatewayError {
        GatewayError::Transport { endpoint: self.endpoint.name.clone(), status, message: message.into() }
    }
}

impl LanguageModel for OpenAiCompatible {
    fn name(&self) -> &str {
        &self.endpoint.name
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let images = request.bundle.image_count();
        if let Some(max) = self.endpoint.max_images.filter(|&max| images > max) {
            return Err(GatewayError::TooManyImages { endpoint: self.endpoint.name.clone(), max, got: images });
        }
        let body = chat_request_body(&self.endpoint.model, request.temperature, request.bundle)
            .map_err(|e| self.transport(None, format!("cannot read prompt image: {e}")))?;
        let url = format!("{}/chat/completions", self.endpoint.base_url.trim_end_matches('/'));
        let key = std::env::var(&self.endpoint.api_key_env).unwrap_or_default();

        let (status, text) = self.gate.run(|| {
            let mut req = self.agent.post(&url);
            if !key.is_empty() {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            let mut resp = req.send_json(&body).map_err(|e| self.transport(None, e.to_string()))?;
            let status = resp.status().as_u16();
            let text = resp.body_mut().read_to_string().map_err(|e| self.transport(Some(status), e.to_string()))?;
            Ok::<_, GatewayError>((status, text))
        })?;
        if status >= 400 {
            return Err(
                self.transport(Some(status), format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()))
            );
        }
        let parsed: Value = serde_json::from_str(&text)
            .map_err(|e| GatewayError::BadResponse { endpoint: self.endpoint.name.clone(), message: e.to_string() })?;
        parsed["choices"][0]["message"]["content"].as_str().map(str::to_string).ok_or_else(|| {
            GatewayError::BadResponse {
                endpoint: self.endpoint.name.clone(),
                message: "no choices[0].message.content".into(),
            }
        })
    }
}

/// Canned responses: `{query_id: {stage: [response, ...]}}`. Attempt `n`
/// picks entry `n % len`; the query id `"*"` applies to every query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptedStub {
    script: BTreeMap<String, BTreeMap<Stage, Vec<String>>>,
}

impl ScriptedStub {
    pub const WILDCARD: &'static str = "*";

    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let fail = |message: String| GatewayError::Script { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| fail(e.to_string()))
    }

    pub fn insert(&mut self, query_id: impl Into<String>, stage: Stage, responses: Vec<String>) -> &mut Self {
        self.script.entry(query_id.into()).or_default().insert(stage, responses);
        self
    }

    pub fn with(mut self, query_id: impl Into<String>, stage: Stage, responses: &[&str]) -> Self {
        self.insert(query_id, stage, responses.iter().map(|s| s.to_string()).collect());
        self
    }

    fn lookup(&self, query_id: &str, stage: Stage, attempt: u32) -> Option<&str> {
        [query_id, Self::WILDCARD].into_iter().find_map(|id| {
            let list = self.script.get(id)?.get(&stage)?;
            (!list.is_empty()).then(|| list[attempt as usize % list.len()].as_str())
        })
    }
}

impl LanguageModel for ScriptedStub {
    fn name(&self) -> &str {
        "scripted-stub"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        self.lookup(request.query_id, request.stage, request.attempt).map(str::to_string).ok_or_else(|| {
            GatewayError::StubMiss { query_id: request.query_id.into(), stage: request.stage, attempt: request.attempt }
        })
    }
}

#[derive(Debug, Clone)]
struct Truth {
    requery: String,
    valid_urls: Vec<String>,
    answer: String,
}

fn url_key(url: &str) -> &str {
    url.trim().trim_end_matches('/')
}

/// Answers every stage with the ground truth: the reference requery, the
/// first candidate annotated valid, and the reference answer.
#[derive(Debug, Clone, Default)]
pub struct OracleStub {
    truth: HashMap<String, Truth>,
}

impl OracleStub {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a QueryRecord>) -> Self {
        let truth = records
            .into_iter()
            .map(|r| {
                let valid_urls = r
                    .websites
                    .iter()
                    .filter(|w| w.label == WebsiteLabel::Valid)
                    .map(|w| url_key(&w.url).to_string())
                    .collect();
                (r.id.clone(), Truth { requery: r.gt_requery.clone(), valid_urls, answer: r.gt_answer.clone() })
            })
            .collect();
        OracleStub { truth }
    }
}

impl LanguageModel for OracleStub {
    fn name(&self) -> &str {
        "oracle-stub"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let truth =
            self.truth.get(request.query_id).ok_or_else(|| GatewayError::OracleMiss(request.query_id.into()))?;
        Ok(match request.stage {
            Stage::Requery => truth.requery.clone(),
            Stage::Rerank => {
                let index = request
                    .candidate_urls
                    .iter()
                    .position(|u| truth.valid_urls.iter().any(|v| v == url_key(u)))
                    .unwrap_or(0);
                format!("<Website {}>", index + 1)
            }
            Stage::Summarize => truth.answer.clone(),
        })
    }
}
