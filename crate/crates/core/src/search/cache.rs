use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use super::{SearchBackend, SearchError, SearchQuery};

type Key = (String, usize);

#[derive(Default)]
struct Entries {
    map: HashMap<Key, Vec<String>>,
    order: VecDeque<Key>,
}

/// In-memory result cache keyed by the effective query terms.
///
/// Unbounded unless `max_entries` is set, in which case the oldest entry is
/// evicted first. Failed lookups are never cached.
pub struct CachedBackend<B> {
    inner: B,
    max_entries: Option<usize>,
    entries: RwLock<Entries>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<B: SearchBackend> CachedBackend<B> {
    pub fn new(inner: B) -> Self {
        Self::with_capacity(inner, None)
    }

    pub fn with_capacity(inner: B, max_entries: Option<usize>) -> Self {
        CachedBackend {
            inner,
            max_entries,
            entries: RwLock::new(Entries::default()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<B: SearchBackend> SearchBackend for CachedBackend<B> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn fetch(&self, query: &SearchQuery, top_k: usize) -> Result<Vec<String>, SearchError> {
        let key = (query.query_string(), top_k);
        if let Some(hit) = self.entries.read().unwrap().map.get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let fetched = self.inner.fetch(query, top_k)?;

        let mut entries = self.entries.write().unwrap();
        if !entries.map.contains_key(&key) {
            if let Some(max) = self.max_entries {
                while entries.map.len() >= max.max(1) {
                    match entries.order.pop_front() {
                        Some(old) => {
                            entries.map.remove(&old);
                        }
                        None => break,
                    }
                }
            }
            entries.order.push_back(key.clone());
            entries.map.insert(key, fetched.clone());
        }
        Ok(fetched)
    }
}

/// Counts every call that reaches the wrapped backend.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicU64,
}

impl<B: SearchBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: SearchBackend> SearchBackend for CountingBackend<B> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn fetch(&self, query: &SearchQuery, top_k: usize) -> Result<Vec<String>, SearchError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.fetch(query, top_k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{build_index, query, CorpusDocument, SearchConfig};

    fn corpus() -> crate::search::CorpusIndex {
        build_index(vec![
            CorpusDocument {
                doc_id: "a".into(),
                body: "hand flapping when excited".into(),
            },
            CorpusDocument {
                doc_id: "b".into(),
                body: "lines up toys in rows".into(),
            },
        ])
        .unwrap()
    }

    #[test]
    fn repeated_query_served_from_cache() {
        let cached = CachedBackend::new(CountingBackend::new(corpus()));
        let cfg = SearchConfig::default();
        let first = query(&cached, "Hand flapping!", &cfg).unwrap();
        assert_eq!(cached.inner().calls(), 1);
        let second = query(&cached, "hand   flapping", &cfg).unwrap();
        assert_eq!(cached.inner().calls(), 1);
        assert_eq!(cached.hits(), 1);
        assert_eq!(first.snippets, second.snippets);
    }

    #[test]
    fn oldest_entry_evicted() {
        let cached = CachedBackend::with_capacity(CountingBackend::new(corpus()), Some(2));
        let cfg = SearchConfig::default();
        for q in ["hand", "toys", "rows"] {
            query(&cached, q, &cfg).unwrap();
        }
        assert_eq!(cached.len(), 2);
        query(&cached, "rows", &cfg).unwrap();
        assert_eq!(cached.inner().calls(), 3);
        query(&cached, "hand", &cfg).unwrap();
        assert_eq!(cached.inner().calls(), 4);
    }
}
