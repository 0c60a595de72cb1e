use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crowdqc_core::postqc::Criterion;
use crowdqc_core::realtime::QcConfig;
use crowdqc_core::search::HttpSearchConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid study configuration: {0}")]
    Invalid(String),
}

impl ConfigError {
    pub fn is_io(&self) -> bool {
        matches!(self, ConfigError::Io { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub dsm_criterion: Criterion,
    pub prompt: String,
}

/// Recorded for reporting only; no payments are made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Compensation {
    pub qualification_reward: f64,
    pub per_question_reward: f64,
    pub currency: String,
}

impl Default for Compensation {
    fn default() -> Self {
        Compensation {
            qualification_reward: 0.10,
            per_question_reward: 0.40,
            currency: "USD".into(),
        }
    }
}

/// What `/v1/validate` does when the search backend is unreachable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Accept and flag the response for post-collection review.
    #[default]
    FailOpen,
    /// Answer 503 and record nothing.
    FailClosed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchSource {
    /// Build an in-memory index from a corpus JSONL file at startup.
    Corpus { corpus: PathBuf },
    /// Load an index written by `crowdqc index`.
    Index { index: PathBuf },
    Http(HttpSearchConfig),
    /// No backend; requires `qc.search_check_enabled = false`.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    #[serde(default)]
    pub qc: QcConfig,
    #[serde(default)]
    pub questions: Vec<Question>,
    /// JSON array of questions, appended to `questions`.
    #[serde(default)]
    pub questions_file: Option<PathBuf>,
    #[serde(default = "default_quota")]
    pub quota_per_question: u32,
    #[serde(default)]
    pub compensation: Compensation,
    #[serde(default)]
    pub backend_failure_policy: FailurePolicy,
    pub search: SearchSource,
    #[serde(default)]
    pub cache_max_entries: Option<usize>,
    /// Word list replacing the bundled English lexicon.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    pub event_log: PathBuf,
}

fn default_quota() -> u32 {
    10
}

impl StudyConfig {
    pub fn new(search: SearchSource, event_log: impl Into<PathBuf>) -> Self {
        StudyConfig {
            qc: QcConfig::default(),
            questions: Vec::new(),
            questions_file: None,
            quota_per_question: default_quota(),
            compensation: Compensation::default(),
            backend_failure_policy: FailurePolicy::default(),
            search,
            cache_max_entries: None,
            lexicon: None,
            event_log: event_log.into(),
        }
    }

    /// Reads a TOML or JSON (by `.json` extension) config. Relative paths
    /// inside are resolved against the config file's directory, and
    /// `questions_file` is merged into `questions`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: shown.clone(),
            source,
        })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg: StudyConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                path: shown.clone(),
                message: e.to_string(),
            })?
        } else {
            toml::from_str(&text).map_err(|e| ConfigError::Parse {
                path: shown.clone(),
                message: e.to_string(),
            })?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.merge_questions_file()?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.event_log);
        if let Some(p) = self.questions_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.lexicon.as_mut() {
            fix(p);
        }
        match &mut self.search {
            SearchSource::Corpus { corpus } => fix(corpus),
            SearchSource::Index { index } => fix(index),
            SearchSource::Http(_) | SearchSource::None => {}
        }
    }

    pub fn merge_questions_file(&mut self) -> Result<(), ConfigError> {
        let Some(path) = self.questions_file.take() else {
            return Ok(());
        };
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
            path: shown.clone(),
            source,
        })?;
        let extra: Vec<Question> = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: shown,
            message: e.to_string(),
        })?;
        self.questions.extend(extra);
        Ok(())
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        self.qc
            .check()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.quota_per_question < 1 {
            return Err(ConfigError::Invalid("quota_per_question must be at least 1".into()));
        }
        let mut ids = BTreeSet::new();
        for q in &self.questions {
            if q.id.trim().is_empty() {
                return Err(ConfigError::Invalid("question with empty id".into()));
            }
            if !ids.insert(q.id.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate question id {}", q.id)));
            }
        }
        if matches!(self.search, SearchSource::None) && self.qc.search_check_enabled {
            return Err(ConfigError::Invalid(
                "search.kind = \"none\" needs qc.search_check_enabled = false".into(),
            ));
        }
        Ok(())
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_with_defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("questions.json"),
            r#"[{"id":"q02","dsm_criterion":"B1","prompt":"Second?"}]"#,
        )
        .unwrap();
        let path = dir.path().join("study.toml");
        std::fs::write(
            &path,
            r#"
event_log = "events.jsonl"
questions_file = "questions.json"

[[questions]]
id = "q01"
dsm_criterion = "A1"
prompt = "First?"

[search]
kind = "corpus"
corpus = "corpus.jsonl"

[qc]
gibberish_threshold = 0.6
"#,
        )
        .unwrap();
        let cfg = StudyConfig::load(&path).unwrap();
        assert_eq!(cfg.quota_per_question, 10);
        assert_eq!(cfg.compensation.per_question_reward, 0.40);
        assert_eq!(cfg.qc.gibberish_threshold, 0.6);
        assert_eq!(cfg.qc.n, 3);
        assert_eq!(cfg.backend_failure_policy, FailurePolicy::FailOpen);
        assert_eq!(cfg.event_log, dir.path().join("events.jsonl"));
        assert_eq!(
            cfg.search,
            SearchSource::Corpus { corpus: dir.path().join("corpus.jsonl") }
        );
        let ids: Vec<_> = cfg.questions.iter().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, ["q01", "q02"]);
    }

    #[test]
    fn http_source_parses() {
        let cfg: StudyConfig = toml::from_str(
            r#"
event_log = "/tmp/e.jsonl"
[search]
kind = "http"
engine_id = "abc"
"#,
        )
        .unwrap();
        match cfg.search {
            SearchSource::Http(h) => {
                assert_eq!(h.engine_id, "abc");
                assert_eq!(h.requests_per_second, 10.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = StudyConfig::new(SearchSource::None, "/tmp/e.jsonl");
        assert!(matches!(cfg.check(), Err(ConfigError::Invalid(_))));
        cfg.qc.search_check_enabled = false;
        cfg.check().unwrap();
        cfg.quota_per_question = 0;
        assert!(cfg.check().is_err());
        cfg.quota_per_question = 1;
        let q = Question {
            id: "q".into(),
            dsm_criterion: Criterion::A1,
            prompt: "p".into(),
        };
        cfg.questions = vec![q.clone(), q];
        assert!(cfg.check().is_err());
        assert!(StudyConfig::load(Path::new("/no/such/study.toml")).unwrap_err().is_io());
    }
}
