use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SearchBackend, SearchError, SearchQuery};
use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub doc_id: String,
    pub body: String,
}

/// Immutable inverted index from normalized token to documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    docs: Vec<CorpusDocument>,
    /// Token to sorted document positions in `docs`.
    postings: BTreeMap<String, Vec<usize>>,
}

/// Builds the index, rejecting duplicate ids and empty bodies.
pub fn build_index(docs: Vec<CorpusDocument>) -> Result<CorpusIndex, SearchError> {
    let mut seen = HashSet::new();
    for doc in &docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(SearchError::DuplicateDocId(doc.doc_id.clone()));
        }
        if doc.body.trim().is_empty() {
            return Err(SearchError::EmptyDocument(doc.doc_id.clone()));
        }
    }
    let mut postings: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (pos, doc) in docs.iter().enumerate() {
        let distinct: BTreeSet<String> = normalize(&doc.body).tokens().iter().cloned().collect();
        for token in distinct {
            postings.entry(token).or_default().push(pos);
        }
    }
    Ok(CorpusIndex { docs, postings })
}

impl CorpusIndex {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[CorpusDocument] {
        &self.docs
    }

    pub fn document(&self, doc_id: &str) -> Option<&CorpusDocument> {
        self.docs.iter().find(|d| d.doc_id == doc_id)
    }

    /// Document ids containing `token`.
    pub fn postings(&self, token: &str) -> Vec<&str> {
        self.postings
            .get(token)
            .map(|p| p.iter().map(|&i| self.docs[i].doc_id.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn token_count(&self) -> usize {
        self.postings.len()
    }

    /// Documents ranked by the number of distinct query tokens they contain,
    /// ties broken by `doc_id`. Documents sharing no token are never returned.
    pub fn rank(&self, query: &SearchQuery, top_k: usize) -> Vec<(&CorpusDocument, usize)> {
        let terms: BTreeSet<&String> = query.effective_terms.tokens().iter().collect();
        let mut scores: HashMap<usize, usize> = HashMap::new();
        for term in terms {
            if let Some(docs) = self.postings.get(term.as_str()) {
                for &d in docs {
                    *scores.entry(d).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&CorpusDocument, usize)> =
            scores.into_iter().map(|(d, s)| (&self.docs[d], s)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.doc_id.cmp(&b.0.doc_id)));
        ranked.truncate(top_k);
        ranked
    }

    /// Reads a JSONL corpus (`{"doc_id": .., "body": ..}` per line) and indexes it.
    pub fn from_jsonl(path: impl AsRef<Path>) -> Result<Self, crate::io::LoadError> {
        let docs: Vec<CorpusDocument> = crate::io::read_jsonl(path.as_ref())?;
        build_index(docs).map_err(|e| crate::io::LoadError::Invalid {
            path: path.as_ref().display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), crate::io::LoadError> {
        let json = serde_json::to_string(self).expect("index serializes");
        std::fs::write(path.as_ref(), json).map_err(|source| crate::io::LoadError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })
    }

    /// Loads a saved index and checks its postings against the stored documents.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, crate::io::LoadError> {
        let path = path.as_ref();
        let invalid = |message: String| crate::io::LoadError::Invalid {
            path: path.display().to_string(),
            message,
        };
        let content = std::fs::read_to_string(path).map_err(|source| crate::io::LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let stored: CorpusIndex =
            serde_json::from_str(&content).map_err(|e| invalid(e.to_string()))?;
        let rebuilt = build_index(stored.docs.clone()).map_err(|e| invalid(e.to_string()))?;
        if rebuilt.postings != stored.postings {
            return Err(invalid("postings do not match documents".into()));
        }
        Ok(rebuilt)
    }
}

impl SearchBackend for CorpusIndex {
    fn backend_id(&self) -> String {
        format!("offline-corpus({} docs)", self.docs.len())
    }

    fn fetch(&self, query: &SearchQuery, top_k: usize) -> Result<Vec<String>, SearchError> {
        Ok(self
            .rank(query, top_k)
            .into_iter()
            .map(|(doc, _)| doc.body.clone())
            .collect())
    }
}
