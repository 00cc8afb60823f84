//! Search, page fetching, screenshot capture and text extraction, with a
//! record/replay fixture layer so whole runs can execute without a network.
//!
//! Live backends sit behind three small traits ([`SearchProvider`],
//! [`PageFetcher`], [`ScreenshotRenderer`]); [`WebClient`] routes every call
//! through the [`FixtureStore`] according to the [`FixtureMode`].

mod client;
mod extract;
mod fixture;
mod http;

use serde::{Deserialize, Serialize};

use crate::imaging::ImagingError;
use crate::model::ImageAsset;
use crate::retrieval::RetrievalError;

pub use client::{build_full_content_from_parts, WebClient};
pub use extract::extract_text;
pub use fixture::{fixture_key, FixtureMode, FixtureStore};
pub use http::{
    parse_duckduckgo_html, parse_searxng_json, DuckDuckGoHtml, HttpClient, HttpFetcher, HttpRenderer, Politeness,
    RateLimiter, Searxng, DEFAULT_BODY_CAP, USER_AGENT,
};

/// A raw hit from a search provider, before screenshots are attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub snippet: String,
}

/// Rerank input for one website: title, snippet and top-section capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BriefResult {
    /// 1-based position in the provider's ranking.
    pub rank: usize,
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub top_screenshot: ImageAsset,
}

/// Response body and redirect bookkeeping for one fetched page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchedPage {
    pub requested_url: String,
    pub final_url: String,
    pub status: u16,
    #[serde(default)]
    pub redirects: Vec<String>,
    /// Set when the body hit the size cap and was cut short.
    #[serde(default)]
    pub truncated: bool,
    #[serde(skip)]
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    TopSection,
    FullPage,
}

/// What the renderer is asked to capture. Serializes to the renderer wire
/// format: `{url, width, height}` or `{url, width, full_page: true}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderRequest {
    pub url: String,
    pub width: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub full_page: bool,
}

pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, WebError>;
}

pub trait PageFetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<FetchedPage, WebError>;
}

/// External headless-browser capture: URL and viewport in, PNG bytes out.
pub trait ScreenshotRenderer: Send + Sync {
    fn render(&self, request: &RenderRequest) -> Result<Vec<u8>, WebError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentStage {
    Fetch,
    Extract,
    Retrieve,
    Render,
    Slim,
    Segment,
}

#[derive(Debug, thiserror::Error)]
pub enum WebError {
    #[error("HTTP {status} from {url} after {attempts} attempt(s)")]
    Http { url: String, status: u16, attempts: u32 },
    #[error("transport failure for {url} after {attempts} attempt(s): {message}")]
    Transport { url: String, message: String, attempts: u32 },
    #[error("fixture miss for {op} (key {key}); record it first or switch mode")]
    FixtureMiss { op: String, key: String },
    #[error("fixture store error at {path}: {message}")]
    Fixture { path: String, message: String },
    #[error("{0}")]
    Capability(String),
    #[error("malformed provider response: {0}")]
    Parse(String),
    #[error("no search results for {0:?}")]
    NoResults(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("{stage:?} stage failed: {source}")]
    Content { stage: ContentStage, source: Box<WebError> },
}

impl WebError {
    /// Failures of the network or a remote service.
    pub fn is_transport(&self) -> bool {
        match self {
            WebError::Http { .. } | WebError::Transport { .. } => true,
            WebError::Content { source, .. } => source.is_transport(),
            _ => false,
        }
    }

    pub fn in_stage(self, stage: ContentStage) -> WebError {
        WebError::Content { stage, source: Box::new(self) }
    }
}
