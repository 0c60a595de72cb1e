//! Near-duplicate clustering of collected responses.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{jaccard, ngrams, normalize, NGramSet, TextError};

pub const DEFAULT_DUPLICATE_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum DuplicateError {
    #[error("threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("response id {0} appears more than once")]
    DuplicateId(String),
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateReport {
    /// Groups of two or more ids, each sorted; groups ordered by first id.
    pub clusters: Vec<Vec<String>>,
    pub duplicate_rate: f64,
    pub total: usize,
}

impl DuplicateReport {
    /// Responses beyond the first in each cluster.
    pub fn redundant(&self) -> usize {
        self.clusters.iter().map(|c| c.len() - 1).sum()
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Single-linkage clusters over pairs whose n-gram Jaccard is at least
/// `threshold`. Responses with identical normalized text always cluster.
pub fn find_duplicates(
    responses: &[(String, String)],
    n: usize,
    threshold: f64,
) -> Result<DuplicateReport, DuplicateError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(DuplicateError::InvalidThreshold(threshold));
    }
    let mut seen = HashSet::new();
    for (id, _) in responses {
        if !seen.insert(id.as_str()) {
            return Err(DuplicateError::DuplicateId(id.clone()));
        }
    }

    let normalized: Vec<_> = responses.iter().map(|(_, t)| normalize(t)).collect();
    let grams: Vec<NGramSet> = normalized
        .iter()
        .map(|t| ngrams(t, n))
        .collect::<Result<_, _>>()?;
    let mut uf = UnionFind::new(responses.len());

    let mut by_text: HashMap<&[String], usize> = HashMap::new();
    for (i, t) in normalized.iter().enumerate() {
        match by_text.get(t.tokens()) {
            Some(&j) => uf.union(i, j),
            None => {
                by_text.insert(t.tokens(), i);
            }
        }
    }

    // Any pair above a positive threshold shares at least one gram, so
    // candidates come from the gram postings.
    let mut postings: HashMap<&[String], Vec<usize>> = HashMap::new();
    for (i, g) in grams.iter().enumerate() {
        for gram in g.iter() {
            postings.entry(gram.as_slice()).or_default().push(i);
        }
    }
    let mut candidates: HashSet<(usize, usize)> = HashSet::new();
    for ids in postings.values() {
        for (x, &i) in ids.iter().enumerate() {
            for &j in &ids[x + 1..] {
                candidates.insert((i, j));
            }
        }
    }
    for (i, j) in candidates {
        if jaccard(&grams[i], &grams[j])? >= threshold {
            uf.union(i, j);
        }
    }

    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, (id, _)) in responses.iter().enumerate() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(id.clone());
    }
    let mut clusters: Vec<Vec<String>> = groups
        .into_values()
        .filter(|g| g.len() > 1)
        .map(|mut g| {
            g.sort();
            g
        })
        .collect();
    clusters.sort();

    let redundant: usize = clusters.iter().map(|c| c.len() - 1).sum();
    let duplicate_rate = if responses.is_empty() {
        0.0
    } else {
        100.0 * redundant as f64 / responses.len() as f64
    };
    Ok(DuplicateReport {
        clusters,
        duplicate_rate,
        total: responses.len(),
    })
}
