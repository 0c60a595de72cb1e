//! Study state rebuilt by folding events. Live requests and log replay go
//! through the same `apply`.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use crowdqc_core::prequal::{GateFailure, QualificationTag, WorkerProfile};
use crowdqc_core::realtime::{
    record_attempt, AttemptError, AttemptLog, AttemptStore, CandidateResponse, Decision, Verdict,
};
use crowdqc_core::text::NGramSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::StudyConfig;
use crate::events::Event;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("unknown question {0}")]
    UnknownQuestion(String),
    #[error("question {question} already has {quota} accepted responses")]
    QuotaExhausted { question: String, quota: u32 },
    #[error("worker {worker} already has an accepted submission for {question}")]
    AlreadyAccepted { worker: String, question: String },
    #[error("session {0} was already submitted")]
    AlreadySubmitted(String),
    #[error("session {0} has no accepted validation for this text")]
    NotValidated(String),
    #[error(transparent)]
    Attempt(#[from] AttemptError),
    #[error("receipt {found} out of sequence, expected {expected}")]
    ReceiptOutOfSequence { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub receipt_id: String,
    pub response: CandidateResponse,
    pub verdict_history: Vec<Decision>,
    pub accepted: bool,
    /// Accepted while the search backend was down.
    pub for_review: bool,
    pub persisted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub profile: WorkerProfile,
    pub accepted: bool,
    pub reasons: Vec<GateFailure>,
    pub qualifications: Vec<QualificationTag>,
    pub registered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct SessionState {
    accepted_text: Option<String>,
    for_review: bool,
    receipt_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionAttempts {
    pub question_id: String,
    /// Sessions that ended in an Accept.
    pub completed_sessions: usize,
    pub open_sessions: usize,
    pub rejections: u64,
    /// Mean rejections before the Accept over completed sessions.
    pub mean_attempts_before_success: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyState {
    questions: BTreeSet<String>,
    quota: u32,
    n: usize,
    attempts: AttemptStore,
    sessions: BTreeMap<String, SessionState>,
    submissions: BTreeMap<String, Submission>,
    /// Question id to workers with an accepted submission.
    accepted: BTreeMap<String, BTreeSet<String>>,
    workers: BTreeMap<String, WorkerRecord>,
}

impl StudyState {
    pub fn new(cfg: &StudyConfig) -> Self {
        StudyState {
            questions: cfg.questions.iter().map(|q| q.id.clone()).collect(),
            quota: cfg.quota_per_question,
            n: cfg.qc.n,
            attempts: AttemptStore::with_max_attempts(cfg.qc.max_attempts),
            sessions: BTreeMap::new(),
            submissions: BTreeMap::new(),
            accepted: BTreeMap::new(),
            workers: BTreeMap::new(),
        }
    }

    pub fn accepted_count(&self, question_id: &str) -> usize {
        self.accepted.get(question_id).map_or(0, BTreeSet::len)
    }

    pub fn quota(&self) -> u32 {
        self.quota
    }

    pub fn attempt_log(&self, session_id: &str) -> Option<&AttemptLog> {
        self.attempts.get(session_id)
    }

    pub fn submissions(&self) -> impl Iterator<Item = &Submission> {
        self.submissions.values()
    }

    pub fn worker(&self, worker_id: &str) -> Option<&WorkerRecord> {
        self.workers.get(worker_id)
    }

    pub fn next_receipt_id(&self) -> String {
        format!("sub-{:06}", self.submissions.len() + 1)
    }

    fn check_question(&self, resp: &CandidateResponse) -> Result<(), StateError> {
        if !self.questions.contains(&resp.question_id) {
            return Err(StateError::UnknownQuestion(resp.question_id.clone()));
        }
        if self
            .accepted
            .get(&resp.question_id)
            .is_some_and(|w| w.contains(&resp.worker_id))
        {
            return Err(StateError::AlreadyAccepted {
                worker: resp.worker_id.clone(),
                question: resp.question_id.clone(),
            });
        }
        if self.accepted_count(&resp.question_id) >= self.quota as usize {
            return Err(StateError::QuotaExhausted {
                question: resp.question_id.clone(),
                quota: self.quota,
            });
        }
        Ok(())
    }

    /// Preconditions for recording a validation of `resp`.
    pub fn check_validate(&self, resp: &CandidateResponse) -> Result<(), StateError> {
        self.check_question(resp)?;
        self.attempts.check_open(resp)?;
        Ok(())
    }

    /// Preconditions for persisting `resp` as a submission.
    pub fn check_submit(&self, resp: &CandidateResponse) -> Result<(), StateError> {
        let session = self.sessions.get(&resp.session_id);
        if session.is_some_and(|s| s.receipt_id.is_some()) {
            return Err(StateError::AlreadySubmitted(resp.session_id.clone()));
        }
        self.check_question(resp)?;
        let log = self.attempts.get(&resp.session_id);
        let owned = log.is_some_and(|l| {
            l.worker_id == resp.worker_id && l.question_id == resp.question_id && l.is_finalized()
        });
        let same_text = session.and_then(|s| s.accepted_text.as_deref()) == Some(resp.text.as_str());
        if !owned || !same_text {
            return Err(StateError::NotValidated(resp.session_id.clone()));
        }
        Ok(())
    }

    pub fn submission_for_session(&self, session_id: &str) -> Option<&Submission> {
        let receipt = self.sessions.get(session_id)?.receipt_id.as_ref()?;
        self.submissions.get(receipt)
    }

    /// Whether `apply(event)` would succeed. Never mutates.
    pub fn check(&self, event: &Event) -> Result<(), StateError> {
        match event {
            Event::WorkerRegistered { .. } => Ok(()),
            Event::Validated { response, .. } => self.check_validate(response),
            Event::Submitted {
                receipt_id,
                response,
                ..
            } => {
                self.check_submit(response)?;
                let expected = self.next_receipt_id();
                if *receipt_id != expected {
                    return Err(StateError::ReceiptOutOfSequence {
                        expected,
                        found: receipt_id.clone(),
                    });
                }
                Ok(())
            }
        }
    }

    /// Folds one event into the state. On error the state is unchanged.
    pub fn apply(&mut self, event: &Event) -> Result<(), StateError> {
        self.check(event)?;
        match event {
            Event::WorkerRegistered {
                at,
                profile,
                accepted,
                reasons,
                qualifications,
            } => {
                self.workers.insert(
                    profile.worker_id.clone(),
                    WorkerRecord {
                        profile: profile.clone(),
                        accepted: *accepted,
                        reasons: reasons.clone(),
                        qualifications: qualifications.clone(),
                        registered_at: *at,
                    },
                );
            }
            Event::Validated {
                response,
                decision,
                validity,
                degraded,
                ..
            } => {
                let verdict = Verdict {
                    decision: *decision,
                    shared: NGramSet::empty(self.n).expect("n validated with config"),
                    validity: *validity,
                    message: String::new(),
                };
                record_attempt(&mut self.attempts, response, &verdict)?;
                if *decision == Decision::Accept {
                    let s = self.sessions.entry(response.session_id.clone()).or_default();
                    s.accepted_text = Some(response.text.clone());
                    s.for_review = *degraded;
                }
            }
            Event::Submitted {
                at,
                receipt_id,
                response,
            } => {
                let session = self
                    .sessions
                    .get_mut(&response.session_id)
                    .expect("checked by check_submit");
                session.receipt_id = Some(receipt_id.clone());
                let history = self
                    .attempts
                    .get(&response.session_id)
                    .map(|l| l.outcomes.clone())
                    .unwrap_or_default();
                self.submissions.insert(
                    receipt_id.clone(),
                    Submission {
                        receipt_id: receipt_id.clone(),
                        response: response.clone(),
                        verdict_history: history,
                        accepted: true,
                        for_review: session.for_review,
                        persisted_at: *at,
                    },
                );
                self.accepted
                    .entry(response.question_id.clone())
                    .or_default()
                    .insert(response.worker_id.clone());
            }
        }
        Ok(())
    }

    /// Attempt statistics for every configured question, in id order.
    pub fn attempt_metrics(&self) -> Vec<QuestionAttempts> {
        let mut by_q: BTreeMap<&str, QuestionAttempts> = self
            .questions
            .iter()
            .map(|q| {
                (
                    q.as_str(),
                    QuestionAttempts {
                        question_id: q.clone(),
                        completed_sessions: 0,
                        open_sessions: 0,
                        rejections: 0,
                        mean_attempts_before_success: 0.0,
                    },
                )
            })
            .collect();
        let mut completed_attempts: BTreeMap<&str, u64> = BTreeMap::new();
        for log in self.attempts.logs() {
            let Some(m) = by_q.get_mut(log.question_id.as_str()) else {
                continue;
            };
            m.rejections += u64::from(log.attempts);
            if log.is_finalized() {
                m.completed_sessions += 1;
                *completed_attempts.entry(log.question_id.as_str()).or_default() +=
                    u64::from(log.attempts);
            } else {
                m.open_sessions += 1;
            }
        }
        for (q, total) in completed_attempts {
            let m = by_q.get_mut(q).expect("present");
            m.mean_attempts_before_success = total as f64 / m.completed_sessions as f64;
        }
        by_q.into_values().collect()
    }

    /// Every accepted submission has an Accept as the last verdict of its session.
    pub fn audit(&self) -> Vec<String> {
        self.submissions
            .values()
            .filter(|s| s.verdict_history.last() != Some(&Decision::Accept))
            .map(|s| s.receipt_id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Question, SearchSource};
    use crowdqc_core::postqc::Criterion;

    fn cfg(quota: u32) -> StudyConfig {
        let mut c = StudyConfig::new(SearchSource::None, "/unused");
        c.qc.search_check_enabled = false;
        c.quota_per_question = quota;
        c.questions = vec![Question {
            id: "q1".into(),
            dsm_criterion: Criterion::A1,
            prompt: "?".into(),
        }];
        c
    }

    fn resp(worker: &str, session: &str, text: &str) -> CandidateResponse {
        CandidateResponse {
            worker_id: worker.into(),
            question_id: "q1".into(),
            session_id: session.into(),
            text: text.into(),
            elapsed_seconds: 30.0,
            submitted_at: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    fn validated(r: &CandidateResponse, decision: Decision) -> Event {
        Event::Validated {
            at: DateTime::<Utc>::UNIX_EPOCH,
            response: r.clone(),
            decision,
            validity: 1.0,
            shared: vec![],
            degraded: false,
        }
    }

    fn submitted(state: &StudyState, r: &CandidateResponse) -> Event {
        Event::Submitted {
            at: DateTime::<Utc>::UNIX_EPOCH,
            receipt_id: state.next_receipt_id(),
            response: r.clone(),
        }
    }

    #[test]
    fn fresh_metrics_are_zero() {
        let s = StudyState::new(&cfg(10));
        let m = s.attempt_metrics();
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].completed_sessions, m[0].mean_attempts_before_success), (0, 0.0));
    }

    #[test]
    fn reject_then_accept_then_submit() {
        let mut s = StudyState::new(&cfg(10));
        let bad = resp("w1", "s1", "asdf");
        let good = resp("w1", "s1", "He lines up cars.");
        s.apply(&validated(&bad, Decision::RejectGibberish)).unwrap();
        assert_eq!(s.check_submit(&bad), Err(StateError::NotValidated("s1".into())));
        s.apply(&validated(&good, Decision::Accept)).unwrap();
        assert_eq!(s.attempt_metrics()[0].mean_attempts_before_success, 1.0);
        assert_eq!(s.check_submit(&bad), Err(StateError::NotValidated("s1".into())));
        s.apply(&submitted(&s, &good)).unwrap();
        assert_eq!(s.check_submit(&good), Err(StateError::AlreadySubmitted("s1".into())));
        let sub = s.submissions().next().unwrap();
        assert_eq!(sub.receipt_id, "sub-000001");
        assert_eq!(sub.verdict_history, [Decision::RejectGibberish, Decision::Accept]);
        assert!(s.audit().is_empty());
    }

    #[test]
    fn quota_and_one_acceptance_per_worker() {
        let mut s = StudyState::new(&cfg(2));
        for (w, sess) in [("w1", "s1"), ("w2", "s2")] {
            let r = resp(w, sess, "Fine text.");
            s.apply(&validated(&r, Decision::Accept)).unwrap();
            s.apply(&submitted(&s, &r)).unwrap();
        }
        let again = resp("w1", "s9", "Other text.");
        assert!(matches!(s.check_validate(&again), Err(StateError::AlreadyAccepted { .. })));
        let third = resp("w3", "s3", "Other text.");
        assert_eq!(
            s.check_validate(&third),
            Err(StateError::QuotaExhausted { question: "q1".into(), quota: 2 })
        );
        assert_eq!(s.accepted_count("q1"), 2);
    }

    #[test]
    fn unknown_question_and_out_of_order_receipt() {
        let mut s = StudyState::new(&cfg(10));
        let mut r = resp("w1", "s1", "x");
        r.question_id = "q404".into();
        assert_eq!(s.check_validate(&r), Err(StateError::UnknownQuestion("q404".into())));
        let ok = resp("w1", "s1", "x");
        s.apply(&validated(&ok, Decision::Accept)).unwrap();
        let wrong = Event::Submitted {
            at: DateTime::<Utc>::UNIX_EPOCH,
            receipt_id: "sub-000007".into(),
            response: ok,
        };
        assert!(matches!(s.apply(&wrong), Err(StateError::ReceiptOutOfSequence { .. })));
    }
}
