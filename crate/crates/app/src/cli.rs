//! `gaia` command line: export, detail, eval, serve.
//!
//! Exit codes: 0 success, 1 usage error, 2 load or I/O failure,
//! 3 proposal failure (the message starts with the stage tag).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gaia_core::classify::ClassificationTable;
use gaia_core::eval::{Averaging, EvalError, EvalSettings, LabelSpace};
use gaia_core::gaia::{
    propose, proposal_record, BackendKind, ProposeError, ProposeOptions, PromptTemplate,
};
use gaia_core::model::BuildingModel;
use gaia_core::project::{load_project, save_project, ProjectError};
use gaia_core::rules::RuleTable;
use gaia_core::session_log::LogKind;
use gaia_core::xml::{apply_changeset, export_all, ChangePolicy};

use crate::backends::BackendChoice;
use crate::jobs::{eval_summary, format_proposal, run_eval, task_payload, EvalJob, JobError, LogSink};
use crate::server::{self, ServiceConfig};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_PROPOSAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gaia", version, about = "BIM wall-detailing workbench")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the exchange XML for every wall.
    Export(ExportArgs),
    /// Propose wall types for a task; print the diff or apply it.
    Detail(DetailArgs),
    /// Repeat a task N times and score the answers against the rules.
    Eval(EvalArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// rule, llm or replay.
    #[arg(long, default_value = "rule")]
    backend: BackendKind,
    /// Session log to answer from (replay backend).
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Model identifier for the llm backend (default: $GAIA_MODEL or gpt-4o).
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Instruction template file.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Detailing rule table (JSON).
    #[arg(long)]
    rules: Option<PathBuf>,
}

impl BackendArgs {
    fn choice(&self) -> BackendChoice {
        BackendChoice {
            kind: Some(self.backend),
            replay: self.replay.clone(),
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Strict,
    Lenient,
}

impl From<PolicyArg> for ChangePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Strict => ChangePolicy::Strict,
            PolicyArg::Lenient => ChangePolicy::Lenient,
        }
    }
}

#[derive(Debug, Args)]
struct DetailArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long)]
    task: String,
    #[command(flatten)]
    backend: BackendArgs,
    /// Apply the change set and rewrite the project file.
    #[arg(long)]
    apply: bool,
    #[arg(long, value_enum, default_value = "lenient")]
    policy: PolicyArg,
    /// Comma-separated wall ids (default: all walls).
    #[arg(long, value_delimiter = ',')]
    walls: Vec<String>,
    /// Iteration index recorded in the log and used as the replay key.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    iteration: u32,
    /// Append entries to this session log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AveragingArg {
    Macro,
    Weighted,
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::Macro => Averaging::Macro,
            AveragingArg::Weighted => Averaging::Weighted,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long)]
    task: String,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    iterations: u32,
    /// Prediction table (CSV).
    #[arg(long)]
    out: PathBuf,
    /// Text report.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value = "macro")]
    averaging: AveragingArg,
    #[arg(long, value_enum, default_value = "lenient")]
    policy: PolicyArg,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory of UI assets served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    /// Session log the replay backend answers from.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Where evaluation CSVs and reports are written.
    #[arg(long, default_value = ".")]
    eval_dir: PathBuf,
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
    fn io(message: impl std::fmt::Display) -> Self {
        Self::new(EXIT_IO, message)
    }
    fn proposal(e: &ProposeError) -> Self {
        Self::new(EXIT_PROPOSAL, e)
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Export(a) => cmd_export(&a, out),
        Command::Detail(a) => cmd_detail(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Serve(a) => cmd_serve(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
}

fn load(path: &Path) -> Result<BuildingModel, Failure> {
    load_project(path).map_err(|e| match e {
        ProjectError::Io { .. } => Failure::io(e),
        other => Failure::io(format!("{}: {other}", path.display())),
    })
}

fn load_template(path: &Option<PathBuf>) -> Result<PromptTemplate, Failure> {
    match path {
        Some(p) => PromptTemplate::load(p).map_err(|e| Failure::io(format!("{}: {e}", p.display()))),
        None => Ok(PromptTemplate::default()),
    }
}

fn load_rules(path: &Option<PathBuf>) -> Result<RuleTable, Failure> {
    match path {
        Some(p) => RuleTable::load(p).map_err(|e| Failure::io(format!("{}: {e}", p.display()))),
        None => Ok(RuleTable::default()),
    }
}

fn open_log(path: &Option<PathBuf>) -> Result<Option<LogSink>, Failure> {
    path.as_ref()
        .map(|p| LogSink::open(p).map_err(Failure::io))
        .transpose()
}

fn session_name(prefix: &str) -> String {
    let ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    format!("{prefix}-{ms}")
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    std::fs::write(path, text).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))
}

fn cmd_export(a: &ExportArgs, out: &mut dyn Write) -> CmdResult {
    let model = load(&a.project)?;
    let exported = export_all(&model).map_err(Failure::io)?;
    write_file(&a.out, &exported.text)?;
    let _ = writeln!(out, "wrote {} walls to {}", exported.selection.len(), a.out.display());
    Ok(())
}

fn cmd_detail(a: &DetailArgs, out: &mut dyn Write) -> CmdResult {
    let model = load(&a.project)?;
    let rules = load_rules(&a.backend.rules)?;
    let template = load_template(&a.backend.template)?;
    let log = open_log(&a.log)?;
    let classes = ClassificationTable::default();
    let backend = a
        .backend
        .choice()
        .build(&classes, &rules)
        .map_err(|e| Failure::proposal(&ProposeError::from(e)))?;
    let selection = if a.walls.is_empty() {
        model.wall_ids()
    } else {
        a.walls.clone()
    };
    let options = ProposeOptions {
        policy: a.policy.into(),
        template,
        params: a.backend.choice().config().params,
        iteration: a.iteration,
    };
    let session = session_name("cli-detail");
    let task = a.task.trim();
    let record = |kind, payload| -> CmdResult {
        if let Some(log) = &log {
            log.record(&session, kind, Some(task), Some(a.iteration), payload)
                .map_err(Failure::io)?;
        }
        Ok(())
    };
    let tag = backend.tag();
    record(LogKind::TaskSubmitted, task_payload(&tag, selection.len()))?;
    let outcome = propose(&model, &selection, &a.task, backend.as_ref(), &options);
    record(
        LogKind::ProposalReceived,
        serde_json::to_value(proposal_record(&tag, &outcome)).unwrap_or_default(),
    )?;
    let proposal = outcome.map_err(|e| Failure::proposal(&e))?;
    let _ = write!(out, "{}", format_proposal(&proposal));

    if a.apply {
        let updated = apply_changeset(&model, &proposal.changeset)
            .map_err(|e| Failure::new(EXIT_PROPOSAL, format!("[apply] {e}")))?;
        save_project(&updated, &a.project).map_err(Failure::io)?;
        record(
            LogKind::Accepted,
            serde_json::json!({ "applied": proposal.changeset.changes.len() }),
        )?;
        let _ = writeln!(
            out,
            "applied {} change(s) to {}",
            proposal.changeset.changes.len(),
            a.project.display()
        );
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CmdResult {
    let model = load(&a.project)?;
    let rules = load_rules(&a.backend.rules)?;
    let template = load_template(&a.backend.template)?;
    let log = open_log(&a.log)?;
    let classes = ClassificationTable::default();
    let choice = a.backend.choice();
    let backend = choice
        .build(&classes, &rules)
        .map_err(|e| Failure::proposal(&ProposeError::from(e)))?;
    let job = EvalJob {
        model: &model,
        selection: model.wall_ids(),
        task: a.task.clone(),
        backend: backend.as_ref(),
        iterations: a.iterations as usize,
        averaging: a.averaging.into(),
        settings: EvalSettings {
            classes,
            rules,
            options: ProposeOptions {
                policy: a.policy.into(),
                template,
                params: choice.config().params,
                iteration: 1,
            },
        },
        space: LabelSpace::default(),
        session: session_name("cli-eval"),
    };
    let output = run_eval(&job, log.as_ref()).map_err(|e| match e {
        JobError::Eval(EvalError::Backend { iteration, error }) => {
            Failure::new(EXIT_PROPOSAL, format!("{error} (iteration {iteration})"))
        }
        JobError::Eval(EvalError::Golden(g)) => Failure::io(format!("golden labels: {g}")),
        other => Failure::io(other),
    })?;
    write_file(&a.out, &output.table.to_csv_string())?;
    write_file(&a.report, &output.report)?;
    if let Some(log) = &log {
        log.record(
            &job.session,
            LogKind::EvalRun,
            Some(a.task.trim()),
            None,
            eval_summary(&output, &backend.tag(), &a.out, &a.report),
        )
        .map_err(Failure::io)?;
    }
    let m = &output.evaluation.metrics;
    let _ = writeln!(
        out,
        "{} walls x {} iterations ({}): accuracy {:.2}, precision {:.2}, recall {:.2}, F1 {:.2}",
        output.table.len(),
        output.table.iterations(),
        m.averaging,
        m.accuracy,
        m.precision,
        m.recall,
        m.f1
    );
    if let Some(k) = &output.evaluation.kappa {
        let _ = writeln!(out, "overall kappa {:.2} ({})", k.overall, k.overall_band);
    }
    for f in &output.failures {
        let _ = writeln!(out, "iteration {} fell back to current types: {}", f.iteration, f.error);
    }
    let _ = writeln!(out, "wrote {} and {}", a.out.display(), a.report.display());
    Ok(())
}

fn cmd_serve(a: ServeArgs, out: &mut dyn Write) -> CmdResult {
    let model = load(&a.project)?;
    let config = ServiceConfig {
        project_path: a.project.clone(),
        log_path: a.log.clone(),
        replay: a.replay.clone(),
        eval_dir: a.eval_dir.clone(),
        static_dir: a.static_dir.clone(),
        template: load_template(&a.template)?,
        rules: load_rules(&a.rules)?,
        classes: ClassificationTable::default(),
        space: LabelSpace::default(),
    };
    let state = server::AppState::new(config, model).map_err(Failure::io)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(Failure::io)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .map_err(|e| Failure::io(format!("cannot bind {}:{}: {e}", a.host, a.port)))?;
        let addr = listener.local_addr().map_err(Failure::io)?;
        let _ = writeln!(out, "serving {} on http://{addr}", a.project.display());
        let _ = out.flush();
        axum::serve(listener, server::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(Failure::io)
    })
}
