//! Search backends that turn a response into retrieved "surface text".
//!
//! Two backends implement [`SearchBackend`]: an offline [`CorpusIndex`] for
//! deterministic runs and [`HttpSearchBackend`] speaking a Custom-Search-style
//! JSON protocol. [`CachedBackend`] and [`CountingBackend`] wrap either one.

mod cache;
mod http;
mod offline;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{normalize, NormalizedText};

pub use cache::{CachedBackend, CountingBackend};
pub use http::{HttpSearchBackend, HttpSearchConfig, DEFAULT_API_KEY_ENV};
pub use offline::{build_index, CorpusDocument, CorpusIndex};

#[derive(Debug, Error)]
pub enum SearchError {
    /// Transport failure, non-2xx status or an unparseable payload.
    #[error("search backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("duplicate doc_id {0:?} in corpus")]
    DuplicateDocId(String),
    #[error("document {0:?} has an empty body")]
    EmptyDocument(String),
    #[error("search backend misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Queries keep only this many leading tokens of the response.
    pub max_query_tokens: usize,
    pub top_k: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_query_tokens: 32,
            top_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub raw_text: String,
    pub effective_terms: NormalizedText,
}

impl SearchQuery {
    pub fn new(raw_text: &str, max_query_tokens: usize) -> Self {
        SearchQuery {
            raw_text: raw_text.to_owned(),
            effective_terms: normalize(raw_text).truncated(max_query_tokens),
        }
    }

    /// Text actually sent to a backend.
    pub fn query_string(&self) -> String {
        self.effective_terms.joined()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResultSet {
    pub query: SearchQuery,
    /// Empty when the backend returned nothing (the "blank page" case).
    pub snippets: Vec<String>,
    pub backend_id: String,
    pub retrieved_at: DateTime<Utc>,
}

impl SearchResultSet {
    /// Equality ignoring the retrieval timestamp.
    pub fn same_results(&self, other: &SearchResultSet) -> bool {
        self.query == other.query
            && self.snippets == other.snippets
            && self.backend_id == other.backend_id
    }
}

pub trait SearchBackend: Send + Sync {
    fn backend_id(&self) -> String;

    /// Returns up to `top_k` snippets for the query, best first.
    fn fetch(&self, query: &SearchQuery, top_k: usize) -> Result<Vec<String>, SearchError>;
}

impl<B: SearchBackend + ?Sized> SearchBackend for &B {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }

    fn fetch(&self, query: &SearchQuery, top_k: usize) -> Result<Vec<String>, SearchError> {
        (**self).fetch(query, top_k)
    }
}

impl<B: SearchBackend + ?Sized> SearchBackend for std::sync::Arc<B> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }

    fn fetch(&self, query: &SearchQuery, top_k: usize) -> Result<Vec<String>, SearchError> {
        (**self).fetch(query, top_k)
    }
}

/// Runs one search and packages the snippets.
pub fn query(
    backend: &dyn SearchBackend,
    text: &str,
    cfg: &SearchConfig,
) -> Result<SearchResultSet, SearchError> {
    let query = SearchQuery::new(text, cfg.max_query_tokens);
    let snippets = backend
        .fetch(&query, cfg.top_k)?
        .into_iter()
        .filter(|s| !s.trim().is_empty())
        .collect();
    Ok(SearchResultSet {
        query,
        snippets,
        backend_id: backend.backend_id(),
        retrieved_at: Utc::now(),
    })
}

/// Snippets joined by single spaces.
pub fn surface_text(results: &SearchResultSet) -> String {
    results.snippets.join(" ")
}
