use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use crowdqc_core::prequal::{assign_qualifications, gate, WorkerProfile};
use crowdqc_core::realtime::{
    validate, AttemptError, CandidateResponse, Decision, QcError, Verdict,
};
use crowdqc_core::search::{
    CachedBackend, CorpusIndex, HttpSearchBackend, SearchBackend, SearchError,
    SearchQuery,
};
use crowdqc_core::text::{lexical_validity, normalize, Lexicon, NGramSet};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{FailurePolicy, Question, SearchSource, StudyConfig};
use crate::events::{read_events, Event, EventLog, LogError};
use crate::state::{QuestionAttempts, StateError, StudyState};

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("event log line {line} cannot be replayed: {source}")]
    Replay {
        line: usize,
        #[source]
        source: StateError,
    },
    #[error("search backend: {0}")]
    Search(#[from] SearchError),
    #[error(transparent)]
    Load(#[from] crowdqc_core::io::LoadError),
    #[error(transparent)]
    Lexicon(#[from] crowdqc_core::text::TextError),
}

/// Stand-in backend when the search check is disabled.
struct NoSearch;

impl SearchBackend for NoSearch {
    fn backend_id(&self) -> String {
        "none".into()
    }

    fn fetch(&self, _: &SearchQuery, _: usize) -> Result<Vec<String>, SearchError> {
        Err(SearchError::Config("no search backend configured".into()))
    }
}

pub fn build_backend(cfg: &StudyConfig) -> Result<Arc<dyn SearchBackend>, StartupError> {
    let cache = cfg.cache_max_entries;
    Ok(match &cfg.search {
        SearchSource::Corpus { corpus } => {
            Arc::new(CachedBackend::with_capacity(CorpusIndex::from_jsonl(corpus)?, cache))
        }
        SearchSource::Index { index } => {
            Arc::new(CachedBackend::with_capacity(CorpusIndex::load(index)?, cache))
        }
        SearchSource::Http(h) => {
            Arc::new(CachedBackend::with_capacity(HttpSearchBackend::from_env(h)?, cache))
        }
        SearchSource::None => Arc::new(NoSearch),
    })
}

struct Core {
    state: StudyState,
    log: EventLog,
}

pub struct AppState {
    config: StudyConfig,
    backend: Arc<dyn SearchBackend>,
    lexicon: Arc<Lexicon>,
    core: Mutex<Core>,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    /// Builds the backend and lexicon from `config` and replays the event log.
    pub fn from_config(config: StudyConfig) -> Result<Arc<Self>, StartupError> {
        config.check()?;
        let backend = build_backend(&config)?;
        let lexicon = match &config.lexicon {
            Some(path) => Lexicon::load(path)?,
            None => Lexicon::builtin_english(),
        };
        Self::with_backend(config, backend, lexicon)
    }

    pub fn with_backend(
        config: StudyConfig,
        backend: Arc<dyn SearchBackend>,
        lexicon: Lexicon,
    ) -> Result<Arc<Self>, StartupError> {
        config.check()?;
        let state = replay(&config)?;
        let log = EventLog::open(&config.event_log)?;
        Ok(Arc::new(AppState {
            config,
            backend,
            lexicon: Arc::new(lexicon),
            core: Mutex::new(Core { state, log }),
            sessions: Mutex::new(HashMap::new()),
        }))
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    /// Copy of the current state.
    pub fn snapshot(&self) -> StudyState {
        self.core.lock().unwrap().state.clone()
    }

    pub fn sync_log(&self) -> Result<(), LogError> {
        self.core.lock().unwrap().log.sync()
    }

    fn session_lock(&self, session_id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.sessions
            .lock()
            .unwrap()
            .entry(session_id.to_owned())
            .or_default()
            .clone()
    }

    /// Checks, logs and applies one event under the state lock, then reads
    /// the result with `view`.
    fn commit<T>(&self, event: Event, view: impl FnOnce(&StudyState) -> T) -> Result<T, ApiError> {
        let mut core = self.core.lock().unwrap();
        core.state.check(&event)?;
        core.log.append(&event).map_err(ApiError::Log)?;
        core.state
            .apply(&event)
            .expect("event passed its precondition check");
        Ok(view(&core.state))
    }
}

/// Folds the configured event log into a fresh state.
pub fn replay(config: &StudyConfig) -> Result<StudyState, StartupError> {
    let mut state = StudyState::new(config);
    for (i, event) in read_events(&config.event_log)?.iter().enumerate() {
        state
            .apply(event)
            .map_err(|source| StartupError::Replay { line: i + 1, source })?;
    }
    Ok(state)
}

#[derive(Debug, Error)]
enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("search backend unavailable: {0}")]
    Degraded(SearchError),
    #[error("unknown worker {0}")]
    UnknownWorker(String),
    #[error(transparent)]
    Log(LogError),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn status_and_code(&self) -> (StatusCode, &'static str) {
        match self {
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ApiError::State(e) => match e {
                StateError::UnknownQuestion(_) => (StatusCode::NOT_FOUND, "unknown_question"),
                StateError::QuotaExhausted { .. } => (StatusCode::CONFLICT, "quota_exhausted"),
                StateError::AlreadyAccepted { .. } => (StatusCode::CONFLICT, "already_accepted"),
                StateError::AlreadySubmitted(_) => (StatusCode::CONFLICT, "already_submitted"),
                StateError::NotValidated(_) => {
                    (StatusCode::PRECONDITION_FAILED, "not_validated")
                }
                StateError::Attempt(a) => match a {
                    AttemptError::SessionClosed(_) => (StatusCode::CONFLICT, "session_closed"),
                    AttemptError::SessionMismatch { .. } => {
                        (StatusCode::CONFLICT, "session_mismatch")
                    }
                    AttemptError::AttemptLimitReached(_) => {
                        (StatusCode::CONFLICT, "attempt_limit_reached")
                    }
                },
                StateError::ReceiptOutOfSequence { .. } => {
                    (StatusCode::INTERNAL_SERVER_ERROR, "internal")
                }
            },
            ApiError::Degraded(_) => (StatusCode::SERVICE_UNAVAILABLE, "service_degraded"),
            ApiError::UnknownWorker(_) => (StatusCode::NOT_FOUND, "unknown_worker"),
            ApiError::Log(_) | ApiError::Internal(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_and_code();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(json!({ "error": code, "message": self.to_string() }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::BadRequest(e.body_text())
    }
}

#[derive(Debug, Serialize)]
pub struct ValidateReply {
    pub session_id: String,
    pub decision: Decision,
    pub message: String,
    /// Rejections recorded for this session so far.
    pub attempts: u32,
    pub accepted: bool,
    pub for_review: bool,
    pub degraded: bool,
}

#[derive(Debug, Serialize)]
pub struct SubmitReply {
    pub receipt_id: String,
    pub session_id: String,
    pub question_id: String,
    pub persisted_at: chrono::DateTime<Utc>,
    pub for_review: bool,
}

#[derive(Debug, Serialize)]
struct QuestionView<'a> {
    #[serde(flatten)]
    question: &'a Question,
    quota: u32,
    accepted: usize,
    open: bool,
}

#[derive(Debug, Serialize)]
struct WorkerReply {
    worker_id: String,
    accepted: bool,
    reasons: Vec<crowdqc_core::prequal::GateFailure>,
    qualifications: Vec<crowdqc_core::prequal::QualificationTag>,
}

fn check_response(resp: &CandidateResponse) -> Result<(), ApiError> {
    resp.check().map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn validate_handler(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CandidateResponse>, JsonRejection>,
) -> Result<Json<ValidateReply>, ApiError> {
    let Json(resp) = body?;
    check_response(&resp)?;
    let lock = app.session_lock(&resp.session_id);
    let _guard = lock.lock().await;
    app.core.lock().unwrap().state.check_validate(&resp)?;

    let outcome = {
        let app = app.clone();
        let resp = resp.clone();
        tokio::task::spawn_blocking(move || {
            validate(&resp, &app.config.qc, app.backend.as_ref(), &app.lexicon)
        })
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
    };

    let (verdict, degraded) = match outcome {
        Ok(v) => (v, false),
        Err(QcError::ServiceDegraded(e)) => match app.config.backend_failure_policy {
            FailurePolicy::FailClosed => return Err(ApiError::Degraded(e)),
            FailurePolicy::FailOpen => {
                tracing::warn!(session = %resp.session_id, error = %e, "search down, accepting for review");
                let v = Verdict {
                    decision: Decision::Accept,
                    shared: NGramSet::empty(app.config.qc.n)
                        .map_err(|e| ApiError::Internal(e.to_string()))?,
                    validity: lexical_validity(&normalize(&resp.text), &app.lexicon),
                    message: app.config.qc.messages.accept.clone(),
                };
                (v, true)
            }
        },
        Err(QcError::InvalidResponse(m)) => return Err(ApiError::BadRequest(m)),
        Err(e @ QcError::InvalidConfig(_)) => return Err(ApiError::Internal(e.to_string())),
    };

    let shared = verdict.shared.to_strings();
    if !shared.is_empty() {
        tracing::info!(session = %resp.session_id, ?shared, "copied response");
    }
    let attempts = app.commit(
        Event::Validated {
            at: Utc::now(),
            response: resp.clone(),
            decision: verdict.decision,
            validity: verdict.validity,
            shared,
            degraded,
        },
        |state| state.attempt_log(&resp.session_id).map_or(0, |l| l.attempts),
    )?;
    Ok(Json(ValidateReply {
        session_id: resp.session_id,
        decision: verdict.decision,
        message: verdict.message,
        attempts,
        accepted: verdict.decision == Decision::Accept,
        for_review: degraded,
        degraded,
    }))
}

async fn submit_handler(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CandidateResponse>, JsonRejection>,
) -> Result<(StatusCode, Json<SubmitReply>), ApiError> {
    let Json(resp) = body?;
    check_response(&resp)?;
    let lock = app.session_lock(&resp.session_id);
    let _guard = lock.lock().await;

    let at = Utc::now();
    let sub = {
        // Receipt ids are sequential, so allocation and commit share one lock.
        let mut core = app.core.lock().unwrap();
        let event = Event::Submitted {
            at,
            receipt_id: core.state.next_receipt_id(),
            response: resp.clone(),
        };
        core.state.check(&event)?;
        core.log.append(&event).map_err(ApiError::Log)?;
        core.state
            .apply(&event)
            .expect("event passed its precondition check");
        core.state
            .submission_for_session(&resp.session_id)
            .cloned()
            .ok_or_else(|| ApiError::Internal("submission missing after commit".into()))?
    };
    Ok((
        StatusCode::CREATED,
        Json(SubmitReply {
            receipt_id: sub.receipt_id.clone(),
            session_id: resp.session_id,
            question_id: resp.question_id,
            persisted_at: sub.persisted_at,
            for_review: sub.for_review,
        }),
    ))
}

async fn questions_handler(State(app): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let state = app.snapshot();
    let quota = app.config.quota_per_question;
    let questions: Vec<QuestionView> = app
        .config
        .questions
        .iter()
        .map(|q| {
            let accepted = state.accepted_count(&q.id);
            QuestionView {
                question: q,
                quota,
                accepted,
                open: accepted < quota as usize,
            }
        })
        .collect();
    Json(json!({
        "conditions": {
            "paste_blocked": app.config.qc.paste_restriction_enabled,
            "live_check": app.config.qc.search_check_enabled,
        },
        "compensation": app.config.compensation,
        "questions": questions,
    }))
}

async fn attempts_handler(State(app): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let metrics: Vec<QuestionAttempts> = app.snapshot().attempt_metrics();
    let completed: usize = metrics.iter().map(|m| m.completed_sessions).sum();
    let weighted: f64 = metrics
        .iter()
        .map(|m| m.mean_attempts_before_success * m.completed_sessions as f64)
        .sum();
    let overall = if completed == 0 { 0.0 } else { weighted / completed as f64 };
    Json(json!({
        "questions": metrics,
        "overall_mean_attempts_before_success": overall,
    }))
}

async fn register_worker(
    State(app): State<Arc<AppState>>,
    body: Result<Json<WorkerProfile>, JsonRejection>,
) -> Result<(StatusCode, Json<WorkerReply>), ApiError> {
    let Json(profile) = body?;
    let decision = gate(&profile).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let qualifications: Vec<_> = if decision.accepted {
        assign_qualifications(&profile).into_iter().collect()
    } else {
        Vec::new()
    };
    let known = app.core.lock().unwrap().state.worker(&profile.worker_id).is_some();
    let reply = WorkerReply {
        worker_id: profile.worker_id.clone(),
        accepted: decision.accepted,
        reasons: decision.reasons.clone(),
        qualifications: qualifications.clone(),
    };
    app.commit(
        Event::WorkerRegistered {
            at: Utc::now(),
            profile,
            accepted: decision.accepted,
            reasons: decision.reasons,
            qualifications,
        },
        |_| (),
    )?;
    let status = if known { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(reply)))
}

async fn worker_qualifications(
    State(app): State<Arc<AppState>>,
    Path(worker_id): Path<String>,
) -> Result<Json<WorkerReply>, ApiError> {
    let state = app.snapshot();
    let w = state
        .worker(&worker_id)
        .ok_or_else(|| ApiError::UnknownWorker(worker_id.clone()))?;
    Ok(Json(WorkerReply {
        worker_id,
        accepted: w.accepted,
        reasons: w.reasons.clone(),
        qualifications: w.qualifications.clone(),
    }))
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/questions", get(questions_handler))
        .route("/v1/validate", post(validate_handler))
        .route("/v1/submit", post(submit_handler))
        .route("/v1/metrics/attempts", get(attempts_handler))
        .route("/v1/workers", post(register_worker))
        .route("/v1/workers/{id}/qualifications", get(worker_qualifications))
        .with_state(app)
}

/// Serves until `shutdown` resolves, then syncs the event log.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(app.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    app.sync_log().map_err(std::io::Error::other)?;
    tracing::info!(log = %app.config.event_log.display(), "event log synced");
    Ok(())
}
