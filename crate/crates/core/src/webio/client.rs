use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::fixture::{fixture_key, FixtureMode, FixtureStore};
use super::{
    extract_text, BriefResult, ContentStage, FetchedPage, PageFetcher, RenderMode, RenderRequest, ScreenshotRenderer,
    SearchHit, SearchProvider, WebError,
};
use crate::exec::Execution;
use crate::imaging;
use crate::model::{FullWebsiteContent, ImageAsset, ImageKind, PipelineConfig};
use crate::retrieval::{retrieve_relevant, RelevanceScorer, ScorerRegistry};

#[derive(Serialize, Deserialize)]
struct SearchFixture {
    query: String,
    k: usize,
    hits: Vec<SearchHit>,
}

fn normalize_query(query: &str) -> String {
    query.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn short_hash(url: &str) -> String {
    fixture_key("id", &json!(url))[..12].to_string()
}

/// Order-preserving map running at most `limit` calls at once.
fn bounded_map<T: Sync, R: Send>(items: &[T], limit: usize, f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let limit = limit.max(1);
    let mut out = Vec::with_capacity(items.len());
    for (batch_no, batch) in items.chunks(limit).enumerate() {
        let base = batch_no * limit;
        std::thread::scope(|s| {
            let handles: Vec<_> = batch
                .iter()
                .enumerate()
                .map(|(i, item)| {
                    let f = &f;
                    s.spawn(move || f(base + i, item))
                })
                .collect();
            out.extend(handles.into_iter().map(|h| h.join().expect("worker panicked")));
        });
    }
    out
}

/// Fixture-aware front end over the search, fetch and render backends.
#[derive(Clone)]
pub struct WebClient {
    mode: FixtureMode,
    store: Option<FixtureStore>,
    search: Option<Arc<dyn SearchProvider>>,
    fetcher: Option<Arc<dyn PageFetcher>>,
    renderer: Option<Arc<dyn ScreenshotRenderer>>,
    scorers: ScorerRegistry,
    max_in_flight: usize,
    exec: Execution,
}

impl WebClient {
    pub fn new(mode: FixtureMode) -> Self {
        WebClient {
            mode,
            store: None,
            search: None,
            fetcher: None,
            renderer: None,
            scorers: ScorerRegistry::default(),
            max_in_flight: 4,
            exec: Execution::default(),
        }
    }

    /// Offline client serving everything from `store`.
    pub fn replay(store: FixtureStore) -> Self {
        WebClient::new(FixtureMode::Replay).with_store(store)
    }

    pub fn with_store(mut self, store: FixtureStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn with_search(mut self, provider: Arc<dyn SearchProvider>) -> Self {
        self.search = Some(provider);
        self
    }

    pub fn with_fetcher(mut self, fetcher: Arc<dyn PageFetcher>) -> Self {
        self.fetcher = Some(fetcher);
        self
    }

    pub fn with_renderer(mut self, renderer: Arc<dyn ScreenshotRenderer>) -> Self {
        self.renderer = Some(renderer);
        self
    }

    pub fn with_scorers(mut self, scorers: ScorerRegistry) -> Self {
        self.scorers = scorers;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn mode(&self) -> FixtureMode {
        self.mode
    }

    pub fn scorers(&self) -> &ScorerRegistry {
        &self.scorers
    }

    fn store(&self) -> Result<&FixtureStore, WebError> {
        self.store
            .as_ref()
            .ok_or_else(|| WebError::Capability(format!("fixture mode {:?} needs a fixture directory", self.mode)))
    }

    fn cached<T>(
        &self,
        op: &str,
        args: Value,
        read: impl FnOnce(&FixtureStore, &str) -> Result<T, WebError>,
        live: impl FnOnce() -> Result<T, WebError>,
        write: impl FnOnce(&FixtureStore, &str, &T) -> Result<(), WebError>,
    ) -> Result<T, WebError> {
        let key = fixture_key(op, &args);
        match self.mode {
            FixtureMode::Replay => read(self.store()?, &key),
            FixtureMode::Live => live(),
            FixtureMode::Record => {
                let store = self.store()?;
                let value = live()?;
                write(store, &key, &value)?;
                Ok(value)
            }
        }
    }

    /// Ranked provider hits for `query`, at most `k`.
    pub fn search_hits(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, WebError> {
        let query = normalize_query(query);
        let fixture = self.cached(
            "search",
            json!({ "query": query, "k": k }),
            |store, key| store.read_json::<SearchFixture>("search", key),
            || {
                let provider =
                    self.search.as_ref().ok_or_else(|| WebError::Capability("no search provider configured".into()))?;
                let mut hits = provider.search(&query, k)?;
                hits.truncate(k);
                Ok(SearchFixture { query: query.clone(), k, hits })
            },
            |store, key, value| store.write_json("search", key, value),
        )?;
        Ok(fixture.hits)
    }

    /// Top-`k` results with title, snippet and a top-section capture each.
    pub fn text_search(&self, query: &str, config: &PipelineConfig) -> Result<Vec<BriefResult>, WebError> {
        let hits = self.search_hits(query, config.k_websites)?;
        if hits.is_empty() {
            return Err(WebError::NoResults(normalize_query(query)));
        }
        bounded_map(&hits, self.max_in_flight, |i, hit| {
            let shot = self.render_screenshot(&hit.url, RenderMode::TopSection, config)?;
            Ok(BriefResult {
                rank: i + 1,
                url: hit.url.clone(),
                title: hit.title.clone(),
                snippet: hit.snippet.clone(),
                top_screenshot: shot,
            })
        })
        .into_iter()
        .collect()
    }

    pub fn fetch_page(&self, url: &str) -> Result<FetchedPage, WebError> {
        let url = url.trim();
        self.cached(
            "fetch",
            json!({ "url": url }),
            |store, key| {
                let mut page: FetchedPage = store.read_json("fetch", key)?;
                page.body = store.read_bytes("fetch", key, "bin")?;
                Ok(page)
            },
            || {
                let fetcher =
                    self.fetcher.as_ref().ok_or_else(|| WebError::Capability("no page fetcher configured".into()))?;
                fetcher.fetch(url)
            },
            |store, key, page| {
                store.write_bytes("fetch", key, "bin", &page.body)?;
                store.write_json("fetch", key, page)
            },
        )
    }

    fn render_png(&self, request: &RenderRequest) -> Result<Vec<u8>, WebError> {
        self.cached(
            "render",
            serde_json::to_value(request).expect("render request serializes"),
            |store, key| store.read_bytes("render", key, "png"),
            || {
                let renderer = self.renderer.as_ref().ok_or_else(|| {
                    WebError::Capability("screenshot renderer unavailable (set RENDERER_ENDPOINT or use replay)".into())
                })?;
                renderer.render(request)
            },
            |store, key, bytes| store.write_bytes("render", key, "png", bytes),
        )
    }

    /// Top-section captures are forced to the configured viewport; full-page
    /// captures keep their natural height.
    pub fn render_screenshot(
        &self,
        url: &str,
        mode: RenderMode,
        config: &PipelineConfig,
    ) -> Result<ImageAsset, WebError> {
        let url = url.trim();
        let (request, kind, id) = match mode {
            RenderMode::TopSection => (
                RenderRequest {
                    url: url.to_string(),
                    width: config.top_section_width,
                    height: Some(config.top_section_height),
                    full_page: false,
                },
                ImageKind::TopSectionScreenshot,
                format!("top-{}", short_hash(url)),
            ),
            RenderMode::FullPage => (
                RenderRequest { url: url.to_string(), width: config.fullpage_width, height: None, full_page: true },
                ImageKind::FullpageSegment,
                format!("full-{}", short_hash(url)),
            ),
        };
        let stage = |e: WebError| e.in_stage(ContentStage::Render);
        let bytes = self.render_png(&request).map_err(stage)?;
        let asset = imaging::asset_from_encoded(id, kind, bytes).map_err(|e| stage(e.into()))?;
        match mode {
            RenderMode::TopSection => imaging::fit_exact(&asset, config.top_section_width, config.top_section_height)
                .map_err(|e| stage(e.into())),
            RenderMode::FullPage => Ok(asset),
        }
    }

    /// Full-page capture, slimmed and cut into segments.
    pub fn fullpage_segments(&self, url: &str, config: &PipelineConfig) -> Result<Vec<ImageAsset>, WebError> {
        let full = self.render_screenshot(url, RenderMode::FullPage, config)?;
        slim_and_segment(&full, config, self.exec)
    }

    /// Everything the summarization stage sees for one website.
    pub fn build_full_content(
        &self,
        hit: &SearchHit,
        requery: &str,
        config: &PipelineConfig,
    ) -> Result<FullWebsiteContent, WebError> {
        let scorer =
            self.scorers.get(&config.scorer).map_err(|e| WebError::from(e).in_stage(ContentStage::Retrieve))?;
        let page = self.fetch_page(&hit.url).map_err(|e| e.in_stage(ContentStage::Fetch))?;
        let full = self.render_screenshot(&hit.url, RenderMode::FullPage, config)?;
        build_full_content_from_parts(hit, &page.body, &full, requery, config, scorer.as_ref(), self.exec)
    }
}

fn slim_and_segment(full: &ImageAsset, config: &PipelineConfig, exec: Execution) -> Result<Vec<ImageAsset>, WebError> {
    let slim = imaging::slim_screenshot_with(full, config.slim_threshold, config.min_blank_band, exec)
        .map_err(|e| WebError::from(e).in_stage(ContentStage::Slim))?;
    imaging::segment_fullpage(&slim, config.segment_height, config.max_segments)
        .map_err(|e| WebError::from(e).in_stage(ContentStage::Segment))
}

/// Assembles website content from an already fetched body and full-page
/// capture: extract, retrieve within the token budget, slim, segment.
pub fn build_full_content_from_parts(
    hit: &SearchHit,
    html: &[u8],
    fullpage: &ImageAsset,
    requery: &str,
    config: &PipelineConfig,
    scorer: &dyn RelevanceScorer,
    exec: Execution,
) -> Result<FullWebsiteContent, WebError> {
    let text = extract_text(html);
    let retrieved = retrieve_relevant(&text, requery, config.token_budget, config.chunk_tokens, scorer)
        .map_err(|e| WebError::from(e).in_stage(ContentStage::Retrieve))?;
    Ok(FullWebsiteContent {
        url: hit.url.clone(),
        title: hit.title.clone(),
        snippet: hit.snippet.clone(),
        retrieved_text: retrieved,
        fullpage_segments: slim_and_segment(fullpage, config, exec)?,
    })
}
