//! Real-time validation: gibberish screen, search, n-gram congruence, verdict.
//!
//! The order of checks is fixed. A response whose lexical validity falls
//! below the configured threshold is rejected before any search is issued.
//! Otherwise, when the search check is enabled, the response is compared with
//! the surface text retrieved for it and any shared n-gram marks it as copied.

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search::{self, SearchBackend, SearchConfig, SearchError};
use crate::text::{self, lexical_validity, ngrams, normalize, shared_ngrams, Lexicon, NGramSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub worker_id: String,
    pub question_id: String,
    pub session_id: String,
    pub text: String,
    /// Seconds the worker spent composing the answer.
    pub elapsed_seconds: f64,
    pub submitted_at: DateTime<Utc>,
}

impl CandidateResponse {
    pub fn check(&self) -> Result<(), QcError> {
        for (name, value) in [
            ("worker_id", &self.worker_id),
            ("question_id", &self.question_id),
            ("session_id", &self.session_id),
        ] {
            if value.trim().is_empty() {
                return Err(QcError::InvalidResponse(format!("{name} is empty")));
            }
        }
        if self.elapsed_seconds < 0.0 || !self.elapsed_seconds.is_finite() {
            return Err(QcError::InvalidResponse(format!(
                "elapsed_seconds must be a non-negative number, got {}",
                self.elapsed_seconds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    RejectGibberish,
    RejectCopied,
}

impl Decision {
    pub fn is_reject(self) -> bool {
        !matches!(self, Decision::Accept)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Accept => "Accept",
            Decision::RejectGibberish => "RejectGibberish",
            Decision::RejectCopied => "RejectCopied",
        }
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What to do when the search returns no snippets at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmptyResultPolicy {
    /// Treat the blank result page as a sign of nonsense input.
    RejectAsGibberish,
    Accept,
}

/// Worker-facing messages, one per decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Messages {
    pub accept: String,
    pub gibberish: String,
    pub copied: String,
}

impl Default for Messages {
    fn default() -> Self {
        Messages {
            accept: "Thank you, your response has been recorded.".into(),
            gibberish: "Your response could not be understood. Please re-enter it using complete words.".into(),
            copied: "Your response appears to match text found online. Please re-enter it in your own words.".into(),
        }
    }
}

impl Messages {
    pub fn for_decision(&self, decision: Decision) -> &str {
        match decision {
            Decision::Accept => &self.accept,
            Decision::RejectGibberish => &self.gibberish,
            Decision::RejectCopied => &self.copied,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcConfig {
    /// Shingle width in tokens.
    pub n: usize,
    /// Validity ratio below which a response is gibberish.
    pub gibberish_threshold: f64,
    pub empty_result_policy: EmptyResultPolicy,
    pub search_check_enabled: bool,
    /// Read by survey clients only; the server does not see paste events.
    pub paste_restriction_enabled: bool,
    /// Used by post-collection completion-time screening.
    pub min_completion_seconds: f64,
    /// Shared n-grams needed for a copied verdict.
    pub min_shared_grams: usize,
    /// Rejections allowed per session before further attempts are refused.
    pub max_attempts: Option<u32>,
    pub search: SearchConfig,
    pub messages: Messages,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig {
            n: text::DEFAULT_NGRAM,
            gibberish_threshold: 0.5,
            empty_result_policy: EmptyResultPolicy::Accept,
            search_check_enabled: true,
            paste_restriction_enabled: false,
            min_completion_seconds: 20.0,
            min_shared_grams: 1,
            max_attempts: None,
            search: SearchConfig::default(),
            messages: Messages::default(),
        }
    }
}

impl QcConfig {
    /// Defaults for a live web search backend, where a blank page is a
    /// gibberish signal.
    pub fn live() -> Self {
        QcConfig {
            empty_result_policy: EmptyResultPolicy::RejectAsGibberish,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<(), QcError> {
        let bad = |m: String| Err(QcError::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.gibberish_threshold) {
            return bad(format!(
                "gibberish_threshold must lie in [0, 1], got {}",
                self.gibberish_threshold
            ));
        }
        if self.min_shared_grams == 0 {
            return bad("min_shared_grams must be at least 1".into());
        }
        if self.search.top_k == 0 || self.search.max_query_tokens == 0 {
            return bad("search.top_k and search.max_query_tokens must be positive".into());
        }
        if self.min_completion_seconds.is_nan() || self.min_completion_seconds < 0.0 {
            return bad("min_completion_seconds must be non-negative".into());
        }
        for (name, m) in [
            ("accept", &self.messages.accept),
            ("gibberish", &self.messages.gibberish),
            ("copied", &self.messages.copied),
        ] {
            if m.trim().is_empty() {
                return bad(format!("messages.{name} is empty"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    /// Congruent n-grams; empty unless the decision is `RejectCopied`.
    pub shared: NGramSet,
    pub validity: f64,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum QcError {
    #[error("invalid QC configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    /// The search backend failed. Never turned into a verdict here; the
    /// caller decides between failing open and failing closed.
    #[error("search unavailable, verdict withheld: {0}")]
    ServiceDegraded(#[source] SearchError),
}

fn verdict(cfg: &QcConfig, decision: Decision, shared: NGramSet, validity: f64) -> Verdict {
    Verdict {
        decision,
        shared,
        validity,
        message: cfg.messages.for_decision(decision).to_owned(),
    }
}

/// Validates one response. Deterministic for a fixed backend state.
pub fn validate(
    resp: &CandidateResponse,
    cfg: &QcConfig,
    backend: &dyn SearchBackend,
    lex: &Lexicon,
) -> Result<Verdict, QcError> {
    cfg.check()?;
    resp.check()?;

    let normalized = normalize(&resp.text);
    let validity = lexical_validity(&normalized, lex);
    let no_evidence = NGramSet::empty(cfg.n).expect("n checked above");

    if validity < cfg.gibberish_threshold {
        return Ok(verdict(cfg, Decision::RejectGibberish, no_evidence, validity));
    }
    if !cfg.search_check_enabled {
        return Ok(verdict(cfg, Decision::Accept, no_evidence, validity));
    }

    let results =
        search::query(backend, &resp.text, &cfg.search).map_err(QcError::ServiceDegraded)?;
    if results.snippets.is_empty() {
        let decision = match cfg.empty_result_policy {
            EmptyResultPolicy::RejectAsGibberish => Decision::RejectGibberish,
            EmptyResultPolicy::Accept => Decision::Accept,
        };
        return Ok(verdict(cfg, decision, no_evidence, validity));
    }

    let surface = normalize(&search::surface_text(&results));
    let shared = shared_ngrams(
        &ngrams(&normalized, cfg.n).expect("n checked above"),
        &ngrams(&surface, cfg.n).expect("n checked above"),
    )
    .expect("same width");
    if shared.len() >= cfg.min_shared_grams {
        Ok(verdict(cfg, Decision::RejectCopied, shared, validity))
    } else {
        Ok(verdict(cfg, Decision::Accept, no_evidence, validity))
    }
}

/// Per-session record of validation outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub worker_id: String,
    pub question_id: String,
    pub session_id: String,
    /// Rejections so far; once finalized, the rejections before the Accept.
    pub attempts: u32,
    pub outcomes: Vec<Decision>,
}

impl AttemptLog {
    pub fn is_finalized(&self) -> bool {
        self.outcomes.last() == Some(&Decision::Accept)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AttemptError {
    #[error("session {0} already has an accepted response")]
    SessionClosed(String),
    #[error("session {session} belongs to worker {worker} on question {question}")]
    SessionMismatch {
        session: String,
        worker: String,
        question: String,
    },
    #[error("session {0} reached the attempt limit")]
    AttemptLimitReached(String),
}

/// Attempt logs keyed by session id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttemptStore {
    logs: HashMap<String, AttemptLog>,
    #[serde(default)]
    max_attempts: Option<u32>,
}

impl AttemptStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_max_attempts(max_attempts: Option<u32>) -> Self {
        AttemptStore {
            logs: HashMap::new(),
            max_attempts,
        }
    }

    pub fn get(&self, session_id: &str) -> Option<&AttemptLog> {
        self.logs.get(session_id)
    }

    pub fn logs(&self) -> impl Iterator<Item = &AttemptLog> {
        self.logs.values()
    }

    pub fn len(&self) -> usize {
        self.logs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logs.is_empty()
    }

    /// Fails without side effects if `record_attempt` would be refused.
    pub fn check_open(&self, resp: &CandidateResponse) -> Result<(), AttemptError> {
        let Some(log) = self.logs.get(&resp.session_id) else {
            return Ok(());
        };
        if log.worker_id != resp.worker_id || log.question_id != resp.question_id {
            return Err(AttemptError::SessionMismatch {
                session: log.session_id.clone(),
                worker: log.worker_id.clone(),
                question: log.question_id.clone(),
            });
        }
        if log.is_finalized() {
            return Err(AttemptError::SessionClosed(log.session_id.clone()));
        }
        if let Some(max) = self.max_attempts {
            if log.attempts >= max {
                return Err(AttemptError::AttemptLimitReached(log.session_id.clone()));
            }
        }
        Ok(())
    }
}

/// Appends the verdict's decision to the response's session log.
pub fn record_attempt(
    store: &mut AttemptStore,
    resp: &CandidateResponse,
    v: &Verdict,
) -> Result<AttemptLog, AttemptError> {
    store.check_open(resp)?;
    let log = store
        .logs
        .entry(resp.session_id.clone())
        .or_insert_with(|| AttemptLog {
            worker_id: resp.worker_id.clone(),
            question_id: resp.question_id.clone(),
            session_id: resp.session_id.clone(),
            attempts: 0,
            outcomes: Vec::new(),
        });
    log.outcomes.push(v.decision);
    if v.decision.is_reject() {
        log.attempts += 1;
    }
    Ok(log.clone())
}
