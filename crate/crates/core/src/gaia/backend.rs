//! Design backends: anything that answers a prompt bundle with text.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::ClassificationTable;
use crate::rules::{rule_rewrite, RuleTable};
use crate::session_log::{load_replay, RecordedResponse, ReplaySource};

use super::llm::LlmBackend;
use super::prompt::{GenerationParams, PromptBundle};

pub const API_KEY_VAR: &str = "GAIA_API_KEY";
pub const API_BASE_VAR: &str = "GAIA_API_BASE";
pub const MODEL_VAR: &str = "GAIA_MODEL";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com";
pub const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Llm,
    Rule,
    Replay,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Llm => "llm",
            BackendKind::Rule => "rule",
            BackendKind::Replay => "replay",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "llm" => Ok(BackendKind::Llm),
            "rule" => Ok(BackendKind::Rule),
            "replay" => Ok(BackendKind::Replay),
            other => Err(format!("unknown backend {other:?} (expected rule, llm or replay)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): doubles each time.
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff
            .saturating_mul(2u32.saturating_pow(retry.saturating_sub(1)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub params: GenerationParams,
    pub retry: RetryPolicy,
    pub request_timeout: Duration,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub replay_source: Option<PathBuf>,
}

impl BackendConfig {
    fn base(kind: BackendKind) -> Self {
        BackendConfig {
            kind,
            endpoint: DEFAULT_API_BASE.to_string(),
            params: GenerationParams::default(),
            retry: RetryPolicy::default(),
            request_timeout: Duration::from_secs(180),
            api_key: None,
            replay_source: None,
        }
    }

    pub fn rule() -> Self {
        let mut c = Self::base(BackendKind::Rule);
        c.params.model = "rule".into();
        c
    }

    pub fn replay(source: impl Into<PathBuf>) -> Self {
        let mut c = Self::base(BackendKind::Replay);
        c.params.model = "replay".into();
        c.replay_source = Some(source.into());
        c
    }

    /// LLM settings from `GAIA_API_KEY`, `GAIA_API_BASE` and `GAIA_MODEL`.
    pub fn llm_from_env() -> Self {
        let mut c = Self::base(BackendKind::Llm);
        c.api_key = std::env::var(API_KEY_VAR).ok().filter(|k| !k.trim().is_empty());
        if let Ok(base) = std::env::var(API_BASE_VAR) {
            if !base.trim().is_empty() {
                c.endpoint = base.trim().to_string();
            }
        }
        c.params.model = std::env::var(MODEL_VAR)
            .ok()
            .filter(|m| !m.trim().is_empty())
            .unwrap_or_else(|| DEFAULT_MODEL.to_string());
        c
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = self.params.temperature;
        if t.is_nan() || t < 0.0 {
            return Err(ConfigError::Temperature(self.params.temperature));
        }
        if self.retry.max_attempts == 0 {
            return Err(ConfigError::Invalid("retry.max_attempts must be at least 1".into()));
        }
        match self.kind {
            BackendKind::Llm => {
                if self.api_key.is_none() {
                    return Err(ConfigError::MissingCredential);
                }
                if self.endpoint.trim().is_empty() {
                    return Err(ConfigError::Invalid("LLM endpoint is empty".into()));
                }
                if self.params.model.trim().is_empty() {
                    return Err(ConfigError::Invalid("LLM model identifier is empty".into()));
                }
            }
            BackendKind::Replay => match &self.replay_source {
                None => return Err(ConfigError::Invalid("replay backend needs a source log".into())),
                Some(p) => {
                    if let Err(e) = std::fs::File::open(p) {
                        return Err(ConfigError::Invalid(format!(
                            "replay source {}: {e}",
                            p.display()
                        )));
                    }
                }
            },
            BackendKind::Rule => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{API_KEY_VAR} is not set; the llm backend needs a credential")]
    MissingCredential,
    #[error("temperature must be >= 0, got {0}")]
    Temperature(f64),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HttpFailure {
    Auth,
    RateLimited,
    Server,
    Other,
}

impl HttpFailure {
    pub fn from_status(status: u16) -> Self {
        match status {
            401 | 403 => HttpFailure::Auth,
            429 => HttpFailure::RateLimited,
            500..=599 => HttpFailure::Server,
            _ => HttpFailure::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DispatchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("network failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status} ({kind:?}) after {attempts} attempt(s): {body}")]
    Http {
        status: u16,
        kind: HttpFailure,
        attempts: u32,
        body: String,
    },
    #[error("unexpected response body: {0}")]
    BadResponse(String),
    #[error("no recorded response for task {task:?}, iteration {iteration}")]
    ReplayMiss { task: String, iteration: u32 },
    #[error("recorded failure: {0}")]
    Recorded(String),
    #[error("rule backend: {0}")]
    Rule(String),
}

/// What the backend is answering: the task text and the 1-based iteration.
#[derive(Debug, Clone, Copy)]
pub struct DispatchContext<'a> {
    pub task: &'a str,
    pub iteration: u32,
}

pub trait DesignBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Short label recorded as the change set source.
    fn tag(&self) -> String;

    fn respond(&self, bundle: &PromptBundle, ctx: DispatchContext<'_>) -> Result<String, DispatchError>;
}

/// Deterministic backend: rewrites the embedded document with the detailing rules.
#[derive(Debug, Clone, Default)]
pub struct RuleBackend {
    pub classes: ClassificationTable,
    pub rules: RuleTable,
}

impl RuleBackend {
    pub fn new(classes: ClassificationTable, rules: RuleTable) -> Self {
        RuleBackend { classes, rules }
    }
}

impl DesignBackend for RuleBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Rule
    }

    fn tag(&self) -> String {
        "rule".into()
    }

    fn respond(&self, bundle: &PromptBundle, _ctx: DispatchContext<'_>) -> Result<String, DispatchError> {
        rule_rewrite(&bundle.document, &self.classes, &self.rules)
            .map_err(|e| DispatchError::Rule(e.to_string()))
    }
}

/// Answers from a recorded session log, keyed by (task, iteration).
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    source: ReplaySource,
}

impl ReplayBackend {
    pub fn new(source: ReplaySource) -> Self {
        ReplayBackend { source }
    }
}

impl DesignBackend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn tag(&self) -> String {
        "replay".into()
    }

    fn respond(&self, _bundle: &PromptBundle, ctx: DispatchContext<'_>) -> Result<String, DispatchError> {
        match self.source.get(ctx.task, ctx.iteration) {
            Some(RecordedResponse::Text(raw)) => Ok(raw.clone()),
            Some(RecordedResponse::Failed(message)) => Err(DispatchError::Recorded(message.clone())),
            None => Err(DispatchError::ReplayMiss {
                task: ctx.task.to_string(),
                iteration: ctx.iteration,
            }),
        }
    }
}

/// Builds the backend a config describes. Fails before any network traffic
/// when the config is incomplete.
pub fn build_backend(
    config: &BackendConfig,
    classes: &ClassificationTable,
    rules: &RuleTable,
) -> Result<Box<dyn DesignBackend>, DispatchError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Rule => Box::new(RuleBackend::new(classes.clone(), rules.clone())),
        BackendKind::Replay => {
            let path = config.replay_source.as_ref().expect("validated");
            let source = load_replay(path)
                .map_err(|e| ConfigError::Invalid(format!("replay source: {e}")))?;
            Box::new(ReplayBackend::new(source))
        }
        BackendKind::Llm => Box::new(LlmBackend::new(config.clone())?),
    })
}

/// One-shot dispatch of a bundle to the backend `config` describes.
pub fn dispatch(
    bundle: &PromptBundle,
    ctx: DispatchContext<'_>,
    config: &BackendConfig,
) -> Result<String, DispatchError> {
    let backend = build_backend(config, &ClassificationTable::default(), &RuleTable::default())?;
    backend.respond(bundle, ctx)
}
