//! The design-assistance pipeline: export the selection, wrap it in the
//! instruction template, ask a backend, pull the XML out of the reply and
//! turn it into a validated change set. Nothing here mutates the model;
//! applying a proposal is a separate, explicit step.

pub mod backend;
pub mod extract;
pub mod llm;
pub mod prompt;

use std::fmt;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_model, BuildingModel};
use crate::session_log::{ProposalRecord, StageErrorRecord};
use crate::xml::{
    compute_changeset, export_xml, parse_xml, validate_parsed, ChangePolicy, ChangeSet,
    ValidationReport,
};

pub use backend::{
    build_backend, dispatch, BackendConfig, BackendKind, ConfigError, DesignBackend,
    DispatchContext, DispatchError, HttpFailure, ReplayBackend, RetryPolicy, RuleBackend,
};
pub use extract::{extract_xml, NoXmlFound};
pub use llm::LlmBackend;
pub use prompt::{assemble_prompt, GenerationParams, PromptBundle, PromptError, PromptTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Model,
    Export,
    Prompt,
    Dispatch,
    Extract,
    Parse,
    Changeset,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Model => "model",
            Stage::Export => "export",
            Stage::Prompt => "prompt",
            Stage::Dispatch => "dispatch",
            Stage::Extract => "extract",
            Stage::Parse => "parse",
            Stage::Changeset => "changeset",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A pipeline failure tagged with the stage that produced it. When the
/// backend did answer, its raw text is kept for the log.
#[derive(Debug, Clone, Error)]
#[error("[{stage}] {message}")]
pub struct ProposeError {
    pub stage: Stage,
    pub message: String,
    pub raw_response: Option<String>,
    pub dispatch: Option<DispatchError>,
}

impl ProposeError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        ProposeError {
            stage,
            message: message.to_string(),
            raw_response: None,
            dispatch: None,
        }
    }

    fn with_raw(mut self, raw: &str) -> Self {
        self.raw_response = Some(raw.to_string());
        self
    }
}

impl From<DispatchError> for ProposeError {
    fn from(e: DispatchError) -> Self {
        let stage = match e {
            DispatchError::Config(_) => Stage::Config,
            _ => Stage::Dispatch,
        };
        ProposeError {
            stage,
            message: e.to_string(),
            raw_response: None,
            dispatch: Some(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub prompt: PromptBundle,
    pub raw_response: String,
    pub extracted_xml: String,
    pub changeset: ChangeSet,
    pub validation: ValidationReport,
    pub iteration_index: u32,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
}

#[derive(Debug, Clone)]
pub struct ProposeOptions {
    pub policy: ChangePolicy,
    pub template: PromptTemplate,
    pub params: GenerationParams,
    pub iteration: u32,
}

impl Default for ProposeOptions {
    fn default() -> Self {
        ProposeOptions {
            policy: ChangePolicy::Lenient,
            template: PromptTemplate::default(),
            params: GenerationParams::default(),
            iteration: 1,
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn propose(
    model: &BuildingModel,
    selection: &[String],
    task: &str,
    backend: &dyn DesignBackend,
    options: &ProposeOptions,
) -> Result<Proposal, ProposeError> {
    let started_at_ms = now_ms();
    let issues = validate_model(model);
    if !issues.is_empty() {
        let listing = issues.iter().map(ToString::to_string).collect::<Vec<_>>();
        return Err(ProposeError::new(
            Stage::Model,
            format!("model is invalid: {}", listing.join("; ")),
        ));
    }
    if selection.is_empty() {
        return Err(ProposeError::new(Stage::Export, "the selection is empty"));
    }
    let exported = export_xml(model, selection).map_err(|e| ProposeError::new(Stage::Export, e))?;
    let library: Vec<String> = model.library.iter().map(|t| t.name.clone()).collect();
    let mut prompt = assemble_prompt(&exported, task, &library, &options.template)
        .map_err(|e| ProposeError::new(Stage::Prompt, e))?;
    prompt.metadata = options.params.clone();

    let ctx = DispatchContext {
        task: task.trim(),
        iteration: options.iteration,
    };
    let raw_response = backend.respond(&prompt, ctx)?;
    let extracted_xml = extract_xml(&raw_response)
        .map_err(|e| ProposeError::new(Stage::Extract, e).with_raw(&raw_response))?;
    let parsed = parse_xml(&extracted_xml)
        .map_err(|e| ProposeError::new(Stage::Parse, e).with_raw(&raw_response))?;
    let validation = validate_parsed(&parsed, model, &exported.selection);
    let changeset = compute_changeset(model, &parsed, &validation, options.policy, &backend.tag())
        .map_err(|e| ProposeError::new(Stage::Changeset, e).with_raw(&raw_response))?;

    Ok(Proposal {
        prompt,
        raw_response,
        extracted_xml,
        changeset,
        validation,
        iteration_index: options.iteration,
        started_at_ms,
        finished_at_ms: now_ms().max(started_at_ms),
    })
}

/// Log payload for the outcome of one proposal attempt.
pub fn proposal_record(backend: &str, outcome: &Result<Proposal, ProposeError>) -> ProposalRecord {
    match outcome {
        Ok(p) => ProposalRecord {
            backend: backend.to_string(),
            raw_response: Some(p.raw_response.clone()),
            error: None,
            changeset: serde_json::to_value(&p.changeset).ok(),
            validation: serde_json::to_value(&p.validation).ok(),
        },
        Err(e) => ProposalRecord {
            backend: backend.to_string(),
            raw_response: e.raw_response.clone(),
            error: Some(StageErrorRecord {
                stage: e.stage.to_string(),
                message: e.message.clone(),
            }),
            changeset: None,
            validation: None,
        },
    }
}
