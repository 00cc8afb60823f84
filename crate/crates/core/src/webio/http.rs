use std::collections::HashMap;
use std::io::Read;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use scraper::{Html, Selector};
use serde::Deserialize;
use url::Url;

use super::{FetchedPage, PageFetcher, RenderRequest, ScreenshotRenderer, SearchHit, SearchProvider, WebError};

pub const USER_AGENT: &str = concat!("websight-eval/", env!("CARGO_PKG_VERSION"), " (research benchmark harness)");

/// Page bodies beyond this many bytes are truncated.
pub const DEFAULT_BODY_CAP: usize = 5 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct Politeness {
    /// Minimum spacing between two requests to the same host.
    pub min_interval: Duration,
    pub retries: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
    pub max_redirects: u32,
    pub body_cap: usize,
}

impl Default for Politeness {
    fn default() -> Self {
        Politeness {
            min_interval: Duration::from_secs(1),
            retries: 2,
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(30),
            max_redirects: 10,
            body_cap: DEFAULT_BODY_CAP,
        }
    }
}

/// Per-host request spacing shared by every clone of an [`HttpClient`].
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<HashMap<String, Instant>>,
}

impl RateLimiter {
    pub fn new(interval: Duration) -> Self {
        RateLimiter { interval, next: Mutex::new(HashMap::new()) }
    }

    /// Block until a request to `host` is allowed, reserving the slot.
    pub fn acquire(&self, host: &str) {
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let slot = next.get(host).copied().filter(|t| *t > now).unwrap_or(now);
            next.insert(host.to_string(), slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

struct RawResponse {
    status: u16,
    location: Option<String>,
    body: Vec<u8>,
    truncated: bool,
}

/// Blocking HTTP client with per-host spacing, bounded retries and a body cap.
/// Redirects are followed by hand so the chain can be reported.
#[derive(Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    politeness: Politeness,
    limiter: Arc<RateLimiter>,
}

impl HttpClient {
    pub fn new(politeness: Politeness) -> Self {
        let config = ureq::Agent::config_builder()
            .max_redirects(0)
            .http_status_as_error(false)
            .timeout_global(Some(politeness.timeout))
            .user_agent(USER_AGENT)
            .build();
        let limiter = Arc::new(RateLimiter::new(politeness.min_interval));
        HttpClient { agent: ureq::Agent::new_with_config(config), politeness, limiter }
    }

    pub fn politeness(&self) -> &Politeness {
        &self.politeness
    }

    fn once(&self, url: &str, body: Option<(&str, &[u8])>) -> Result<RawResponse, String> {
        let host = Url::parse(url).ok().and_then(|u| u.host_str().map(str::to_string)).unwrap_or_default();
        self.limiter.acquire(&host);
        let result = match body {
            None => self.agent.get(url).call(),
            Some((content_type, bytes)) => self.agent.post(url).header("Content-Type", content_type).send(bytes),
        };
        let mut resp = result.map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let location = resp.headers().get("location").and_then(|v| v.to_str().ok()).map(str::to_string);
        let cap = self.politeness.body_cap;
        let mut buf = Vec::new();
        resp.body_mut().as_reader().take(cap as u64 + 1).read_to_end(&mut buf).map_err(|e| e.to_string())?;
        let truncated = buf.len() > cap;
        buf.truncate(cap);
        Ok(RawResponse { status, location, body: buf, truncated })
    }

    /// One logical request. Transport failures, 429 and 5xx are retried with
    /// exponential backoff; anything else is returned as is.
    fn execute(&self, url: &str, body: Option<(&str, &[u8])>) -> Result<(RawResponse, u32), WebError> {
        let attempts = self.politeness.retries + 1;
        let mut last_err = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(self.politeness.backoff_base * 2u32.pow(attempt - 2));
            }
            match self.once(url, body) {
                Ok(resp) if (resp.status == 429 || resp.status >= 500) && attempt < attempts => {
                    log::warn!("HTTP {} from {url}, retrying", resp.status);
                }
                Ok(resp) => return Ok((resp, attempt)),
                Err(e) => {
                    log::warn!("transport failure for {url} (attempt {attempt}): {e}");
                    last_err = e;
                }
            }
        }
        Err(WebError::Transport { url: url.to_string(), message: last_err, attempts })
    }

    fn checked(&self, url: &str, body: Option<(&str, &[u8])>) -> Result<RawResponse, WebError> {
        let (resp, attempts) = self.execute(url, body)?;
        if resp.status >= 400 {
            return Err(WebError::Http { url: url.to_string(), status: resp.status, attempts });
        }
        Ok(resp)
    }

    pub fn get(&self, url: &str) -> Result<Vec<u8>, WebError> {
        Ok(self.checked(url, None)?.body)
    }

    pub fn post(&self, url: &str, content_type: &str, body: &[u8]) -> Result<Vec<u8>, WebError> {
        Ok(self.checked(url, Some((content_type, body)))?.body)
    }

    /// GET following redirects; 4xx and 5xx after retries become errors.
    pub fn fetch_page(&self, url: &str) -> Result<FetchedPage, WebError> {
        let mut current = url.to_string();
        let mut redirects = Vec::new();
        loop {
            let (resp, attempts) = self.execute(&current, None)?;
            if (300..400).contains(&resp.status) {
                if let Some(location) = &resp.location {
                    if redirects.len() as u32 >= self.politeness.max_redirects {
                        return Err(WebError::Transport {
                            url: url.to_string(),
                            message: format!("more than {} redirects", self.politeness.max_redirects),
                            attempts,
                        });
                    }
                    let next =
                        Url::parse(&current).and_then(|base| base.join(location)).map_err(|e| WebError::Transport {
                            url: current.clone(),
                            message: format!("bad redirect target {location:?}: {e}"),
                            attempts,
                        })?;
                    redirects.push(std::mem::replace(&mut current, next.to_string()));
                    continue;
                }
            }
            if resp.status >= 400 {
                return Err(WebError::Http { url: current, status: resp.status, attempts });
            }
            return Ok(FetchedPage {
                requested_url: url.to_string(),
                final_url: current,
                status: resp.status,
                redirects,
                truncated: resp.truncated,
                body: resp.body,
            });
        }
    }
}

impl Default for HttpClient {
    fn default() -> Self {
        HttpClient::new(Politeness::default())
    }
}

pub struct HttpFetcher {
    client: HttpClient,
}

impl HttpFetcher {
    pub fn new(client: HttpClient) -> Self {
        HttpFetcher { client }
    }
}

impl PageFetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<FetchedPage, WebError> {
        self.client.fetch_page(url)
    }
}

/// Screenshot service reached over HTTP: POST the JSON request, get PNG back.
pub struct HttpRenderer {
    endpoint: String,
    client: HttpClient,
}

impl HttpRenderer {
    pub fn new(endpoint: impl Into<String>, client: HttpClient) -> Self {
        HttpRenderer { endpoint: endpoint.into(), client }
    }
}

impl ScreenshotRenderer for HttpRenderer {
    fn render(&self, request: &RenderRequest) -> Result<Vec<u8>, WebError> {
        let body = serde_json::to_vec(request).expect("render request serializes");
        self.client.post(&self.endpoint, "application/json", &body)
    }
}

/// DuckDuckGo's JavaScript-free results page.
pub struct DuckDuckGoHtml {
    endpoint: String,
    client: HttpClient,
}

impl DuckDuckGoHtml {
    pub const ENDPOINT: &'static str = "https://html.duckduckgo.com/html/";

    pub fn new(client: HttpClient) -> Self {
        Self::with_endpoint(Self::ENDPOINT, client)
    }

    pub fn with_endpoint(endpoint: impl Into<String>, client: HttpClient) -> Self {
        DuckDuckGoHtml { endpoint: endpoint.into(), client }
    }
}

impl SearchProvider for DuckDuckGoHtml {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, WebError> {
        let form = url::form_urlencoded::Serializer::new(String::new()).append_pair("q", query).finish();
        let body = self.client.post(&self.endpoint, "application/x-www-form-urlencoded", form.as_bytes())?;
        let mut hits = parse_duckduckgo_html(&String::from_utf8_lossy(&body));
        hits.truncate(k);
        Ok(hits)
    }
}

fn decode_ddg_href(href: &str) -> Option<String> {
    let base = Url::parse("https://duckduckgo.com/").expect("static url");
    let parsed = base.join(href).ok()?;
    if parsed.host_str().is_some_and(|h| h.ends_with("duckduckgo.com")) && parsed.path().starts_with("/l/") {
        return parsed.query_pairs().find(|(k, _)| k == "uddg").map(|(_, v)| v.into_owned());
    }
    Some(parsed.to_string())
}

/// Organic results from a DuckDuckGo HTML page; ads are skipped.
pub fn parse_duckduckgo_html(html: &str) -> Vec<SearchHit> {
    let doc = Html::parse_document(html);
    let result = Selector::parse("div.result").expect("static selector");
    let link = Selector::parse("a.result__a").expect("static selector");
    let snippet = Selector::parse(".result__snippet").expect("static selector");
    let text = |el: scraper::ElementRef| el.text().collect::<String>().split_whitespace().collect::<Vec<_>>().join(" ");

    let mut hits = Vec::new();
    for block in doc.select(&result) {
        if block.value().classes().any(|c| c == "result--ad") {
            continue;
        }
        let Some(a) = block.select(&link).next() else { continue };
        let Some(url) = a.value().attr("href").and_then(decode_ddg_href) else { continue };
        hits.push(SearchHit {
            url,
            title: text(a),
            snippet: block.select(&snippet).next().map(text).unwrap_or_default(),
        });
    }
    hits
}

/// A SearxNG instance queried through its JSON API.
pub struct Searxng {
    base: String,
    client: HttpClient,
}

impl Searxng {
    pub fn new(base: impl Into<String>, client: HttpClient) -> Self {
        Searxng { base: base.into().trim_end_matches('/').to_string(), client }
    }
}

impl SearchProvider for Searxng {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, WebError> {
        let mut url = Url::parse(&format!("{}/search", self.base))
            .map_err(|e| WebError::Capability(format!("bad SearxNG base {:?}: {e}", self.base)))?;
        url.query_pairs_mut().append_pair("q", query).append_pair("format", "json");
        let body = self.client.get(url.as_str())?;
        let mut hits = parse_searxng_json(&body)?;
        hits.truncate(k);
        Ok(hits)
    }
}

pub fn parse_searxng_json(body: &[u8]) -> Result<Vec<SearchHit>, WebError> {
    #[derive(Deserialize)]
    struct Payload {
        results: Vec<Entry>,
    }
    #[derive(Deserialize)]
    struct Entry {
        url: String,
        #[serde(default)]
        title: String,
        #[serde(default)]
        content: String,
    }
    let payload: Payload = serde_json::from_slice(body).map_err(|e| WebError::Parse(e.to_string()))?;
    Ok(payload.results.into_iter().map(|e| SearchHit { url: e.url, title: e.title, snippet: e.content }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DDG: &str = r#"<html><body>
      <div class="result results_links result--ad"><a class="result__a" href="https://ads.example/">Ad</a></div>
      <div class="result results_links">
        <h2><a class="result__a" href="//duckduckgo.com/l/?uddg=https%3A%2F%2Fen.wikipedia.org%2Fwiki%2FRust&amp;rut=x">Rust   (language)</a></h2>
        <a class="result__snippet">A  systems language.</a>
      </div>
      <div class="result"><a class="result__a" href="https://example.org/direct">Direct</a></div>
    </body></html>"#;

    #[test]
    fn ddg_parses_organic_results() {
        let hits = parse_duckduckgo_html(DDG);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].url, "https://en.wikipedia.org/wiki/Rust");
        assert_eq!(hits[0].title, "Rust (language)");
        assert_eq!(hits[0].snippet, "A systems language.");
        assert_eq!(hits[1].url, "https://example.org/direct");
        assert_eq!(hits[1].snippet, "");
    }

    #[test]
    fn searxng_parses_json() {
        let body = br#"{"query":"q","results":[{"url":"https://a.example/","title":"A","content":"alpha"},{"url":"https://b.example/"}]}"#;
        let hits = parse_searxng_json(body).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].snippet, "alpha");
        assert_eq!(hits[1].title, "");
        assert!(matches!(parse_searxng_json(b"{}"), Err(WebError::Parse(_))));
    }

    #[test]
    fn limiter_spaces_same_host() {
        let limiter = RateLimiter::new(Duration::from_millis(50));
        let start = Instant::now();
        limiter.acquire("a");
        limiter.acquire("b");
        assert!(start.elapsed() < Duration::from_millis(40));
        limiter.acquire("a");
        assert!(start.elapsed() >= Duration::from_millis(50));
    }
}
