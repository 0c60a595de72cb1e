//! Client for a Custom-Search-style JSON API.
//!
//! Requests are `GET {endpoint}?key=..&cx=..&q=..&num=..`; the response body is
//! expected to carry an `items` array whose elements have a `snippet` string.
//! A missing `items` field means no results.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::Url;
use serde::{Deserialize, Serialize};

use super::{SearchBackend, SearchError, SearchQuery};

pub const DEFAULT_API_KEY_ENV: &str = "CROWDQC_SEARCH_API_KEY";

/// The Custom Search API caps `num` at 10.
const MAX_RESULTS_PER_REQUEST: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSearchConfig {
    pub endpoint: String,
    pub engine_id: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub requests_per_second: f64,
    pub timeout_secs: u64,
}

impl Default for HttpSearchConfig {
    fn default() -> Self {
        HttpSearchConfig {
            endpoint: "https://www.googleapis.com/customsearch/v1".into(),
            engine_id: String::new(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            requests_per_second: 10.0,
            timeout_secs: 10,
        }
    }
}

#[derive(Debug, Deserialize)]
struct SearchResponse {
    #[serde(default)]
    items: Option<Vec<SearchItem>>,
}

#[derive(Debug, Deserialize)]
struct SearchItem {
    #[serde(default)]
    snippet: Option<String>,
}

/// Spaces request start times at least `interval` apart.
struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(requests_per_second: f64) -> Self {
        let interval = if requests_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / requests_per_second)
        } else {
            Duration::ZERO
        };
        RateLimiter {
            interval,
            next_slot: Mutex::new(None),
        }
    }

    fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let slot = match *next {
                Some(t) if t > now => t,
                _ => now,
            };
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

pub struct HttpSearchBackend {
    client: Client,
    endpoint: Url,
    engine_id: String,
    api_key: String,
    limiter: RateLimiter,
}

impl HttpSearchBackend {
    pub fn new(cfg: &HttpSearchConfig, api_key: impl Into<String>) -> Result<Self, SearchError> {
        let endpoint = Url::parse(&cfg.endpoint)
            .map_err(|e| SearchError::Config(format!("endpoint {:?}: {e}", cfg.endpoint)))?;
        if cfg.engine_id.is_empty() {
            return Err(SearchError::Config("engine_id is empty".into()));
        }
        let client = Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
            .build()
            .map_err(|e| SearchError::Config(e.to_string()))?;
        Ok(HttpSearchBackend {
            client,
            endpoint,
            engine_id: cfg.engine_id.clone(),
            api_key: api_key.into(),
            limiter: RateLimiter::new(cfg.requests_per_second),
        })
    }

    /// Reads the API key from the environment variable named in the config.
    pub fn from_env(cfg: &HttpSearchConfig) -> Result<Self, SearchError> {
        let key = std::env::var(&cfg.api_key_env).map_err(|_| {
            SearchError::Config(format!("environment variable {} is not set", cfg.api_key_env))
        })?;
        Self::new(cfg, key)
    }

    fn request_url(&self, query: &SearchQuery, top_k: usize) -> Url {
        let mut url = self.endpoint.clone();
        url.query_pairs_mut()
            .append_pair("key", &self.api_key)
            .append_pair("cx", &self.engine_id)
            .append_pair("q", &query.query_string())
            .append_pair("num", &top_k.clamp(1, MAX_RESULTS_PER_REQUEST).to_string());
        url
    }
}

impl SearchBackend for HttpSearchBackend {
    fn backend_id(&self) -> String {
        format!("http:{}", self.endpoint.host_str().unwrap_or("?"))
    }

    fn fetch(&self, query: &SearchQuery, top_k: usize) -> Result<Vec<String>, SearchError> {
        if query.effective_terms.is_empty() {
            return Ok(Vec::new());
        }
        self.limiter.acquire();
        let response = self
            .client
            .get(self.request_url(query, top_k))
            .header("Accept", "application/json")
            .send()
            .map_err(|e| SearchError::BackendUnavailable(format!("transport: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(SearchError::BackendUnavailable(format!("status {status}")));
        }
        let body = response
            .text()
            .map_err(|e| SearchError::BackendUnavailable(format!("reading body: {e}")))?;
        let parsed: SearchResponse = serde_json::from_str(&body)
            .map_err(|e| SearchError::BackendUnavailable(format!("malformed JSON: {e}")))?;
        Ok(parsed
            .items
            .unwrap_or_default()
            .into_iter()
            .filter_map(|item| item.snippet)
            .filter(|s| !s.trim().is_empty())
            .take(top_k)
            .collect())
    }
}
