//! Work shared by the CLI and the HTTP service: logged evaluations and
//! human-readable change listings.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, Mutex};

use gaia_core::eval::{
    evaluate, render_report, run_iterations, Averaging, EvalError, EvalSettings, Evaluation,
    IterationEvent, IterationFailure, LabelSpace, PredictionTable, ReportContext,
};
use gaia_core::gaia::{proposal_record, DesignBackend, Proposal};
use gaia_core::model::BuildingModel;
use gaia_core::session_log::{LogEntry, LogError, LogKind, SessionLog};
use serde_json::{json, Value};
use thiserror::Error;

/// A session log shared between threads. Every append is synced before
/// `record` returns.
#[derive(Clone)]
pub struct LogSink {
    inner: Arc<Mutex<SessionLog>>,
}

impl LogSink {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LogError> {
        Ok(LogSink {
            inner: Arc::new(Mutex::new(SessionLog::open(path)?)),
        })
    }

    pub fn record(
        &self,
        session: &str,
        kind: LogKind,
        task: Option<&str>,
        iteration: Option<u32>,
        payload: Value,
    ) -> Result<LogEntry, LogError> {
        let mut log = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        log.append(session, kind, task, iteration, payload)
    }
}

#[derive(Debug, Error)]
pub enum JobError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Log(#[from] LogError),
}

pub struct EvalJob<'a> {
    pub model: &'a BuildingModel,
    pub selection: Vec<String>,
    pub task: String,
    pub backend: &'a dyn DesignBackend,
    pub iterations: usize,
    pub averaging: Averaging,
    pub settings: EvalSettings,
    pub space: LabelSpace,
    /// Session name used for log entries.
    pub session: String,
}

pub struct EvalOutput {
    pub table: PredictionTable,
    pub evaluation: Evaluation,
    pub report: String,
    pub failures: Vec<IterationFailure>,
}

pub fn task_payload(backend: &str, walls: usize) -> Value {
    json!({ "backend": backend, "walls": walls })
}

pub fn run_eval(job: &EvalJob<'_>, log: Option<&LogSink>) -> Result<EvalOutput, JobError> {
    let tag = job.backend.tag();
    let mut log_error: Option<LogError> = None;
    let run = run_iterations(
        job.model,
        &job.selection,
        &job.task,
        job.backend,
        job.iterations,
        &job.settings,
        |event| {
            let (Some(log), None) = (log, &log_error) else {
                return;
            };
            let written = match event {
                IterationEvent::Started(k) => log.record(
                    &job.session,
                    LogKind::TaskSubmitted,
                    Some(job.task.trim()),
                    Some(k),
                    task_payload(&tag, job.selection.len()),
                ),
                IterationEvent::Finished(k, outcome) => log.record(
                    &job.session,
                    LogKind::ProposalReceived,
                    Some(job.task.trim()),
                    Some(k),
                    serde_json::to_value(proposal_record(&tag, outcome)).unwrap_or(Value::Null),
                ),
            };
            if let Err(e) = written {
                log_error = Some(e);
            }
        },
    );
    if let Some(e) = log_error {
        return Err(e.into());
    }
    let run = run?;
    let evaluation = evaluate(&run.table, &job.space, job.averaging)?;
    let context = ReportContext {
        task: job.task.trim().to_string(),
        backend: tag,
        iterations: job.iterations,
        walls: run.table.len(),
        failed_iterations: run.failures.iter().map(|f| f.iteration).collect(),
    };
    let report = render_report(&context, &job.space, &evaluation);
    Ok(EvalOutput {
        table: run.table,
        evaluation,
        report,
        failures: run.failures,
    })
}

/// Payload of the `EvalRun` log entry.
pub fn eval_summary(out: &EvalOutput, backend: &str, csv: &Path, report: &Path) -> Value {
    let m = &out.evaluation.metrics;
    json!({
        "backend": backend,
        "iterations": out.table.iterations(),
        "walls": out.table.len(),
        "csv": csv.display().to_string(),
        "report": report.display().to_string(),
        "averaging": m.averaging,
        "accuracy": m.accuracy,
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "kappa": out.evaluation.kappa.as_ref().map(|k| k.overall),
        "failed_iterations": out.failures.iter().map(|f| f.iteration).collect::<Vec<_>>(),
    })
}

/// One line per change, then dropped entries and a summary line.
pub fn format_proposal(p: &Proposal) -> String {
    let mut out = String::new();
    let width = p
        .changeset
        .changes
        .iter()
        .map(|c| c.wall_id.len())
        .max()
        .unwrap_or(0);
    for c in &p.changeset.changes {
        let _ = writeln!(out, "{:<width$}  {}  ->  {}", c.wall_id, c.old_type, c.new_type);
    }
    for d in &p.changeset.dropped {
        let issues: Vec<String> = d.issues.iter().map(|i| format!("{i:?}")).collect();
        let _ = writeln!(
            out,
            "dropped {} (proposed {:?}): {}",
            d.wall_id,
            d.proposed_type,
            issues.join(", ")
        );
    }
    for issue in &p.validation.issues {
        if issue.issue == gaia_core::xml::ValidationIssue::MissingWall {
            let _ = writeln!(out, "missing from response: {} (left unchanged)", issue.wall_id);
        }
    }
    let _ = writeln!(
        out,
        "{} change(s) proposed by {}; {} dropped",
        p.changeset.changes.len(),
        p.changeset.source,
        p.changeset.dropped.len()
    );
    out
}
