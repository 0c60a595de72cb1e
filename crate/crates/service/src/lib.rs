//! HTTP service for real-time validation of crowdsourced survey responses.

pub mod app;
pub mod config;
pub mod events;
pub mod state;

pub use app::{replay, router, serve, AppState, StartupError};
pub use config::{ConfigError, FailurePolicy, Question, SearchSource, StudyConfig};
pub use events::{Event, EventLog};
pub use state::{StudyState, Submission};
