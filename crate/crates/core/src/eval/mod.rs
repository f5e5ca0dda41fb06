//! Evaluation harness: repeat a proposal N times, compare each wall's
//! predicted type with the rule-derived golden type, and summarize with a
//! confusion matrix, accuracy/precision/recall/F1 and Fleiss' kappa.

pub mod kappa;
pub mod metrics;
pub mod report;
pub mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::ClassificationTable;
use crate::gaia::{propose, DesignBackend, Proposal, ProposeError, ProposeOptions, Stage};
use crate::model::BuildingModel;
use crate::rules::{derive_golden_labels, wall_types, RuleError, RuleTable};

pub use kappa::{
    build_contingency, category_kappa, fleiss_kappa, interpret_kappa, overall_kappa,
    CategoryKappa, Contingency, KappaBand, KappaError, KappaReport,
};
pub use metrics::{
    classification_metrics, confusion_matrix, Averaging, ClassMetrics, ConfusionMatrix,
    MetricsError, MetricsReport, PredictionColumn,
};
pub use report::{render_report, ReportContext};
pub use table::{majority_vote, PredictionRow, PredictionTable, TableError};

/// Ordered wall-type labels. Confusion matrices use `labels` order; the
/// kappa listing uses `kappa_rows` (indices into `labels`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    labels: Vec<String>,
    kappa_rows: Vec<usize>,
}

impl Default for LabelSpace {
    fn default() -> Self {
        LabelSpace {
            labels: [
                wall_types::GENERIC,
                wall_types::TILE,
                wall_types::EIFS_TILE,
                wall_types::GYPSUM_TILE,
                wall_types::EIFS_GYPSUM,
                wall_types::GYPSUM,
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            kappa_rows: vec![3, 5, 1, 2, 4],
        }
    }
}

impl LabelSpace {
    /// Labels in the given order; the kappa listing covers all of them.
    pub fn new(labels: Vec<String>) -> Result<Self, EvalError> {
        let rows = (0..labels.len()).collect();
        Self::with_kappa_rows(labels, rows)
    }

    pub fn with_kappa_rows(labels: Vec<String>, kappa_rows: Vec<usize>) -> Result<Self, EvalError> {
        if labels.is_empty() {
            return Err(EvalError::LabelSpace("no labels".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(EvalError::LabelSpace(format!("duplicate label {dup:?}")));
        }
        if let Some(bad) = kappa_rows.iter().find(|&&i| i >= labels.len()) {
            return Err(EvalError::LabelSpace(format!("kappa row {bad} out of range")));
        }
        Ok(LabelSpace { labels, kappa_rows })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn kappa_rows(&self) -> &[usize] {
        &self.kappa_rows
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("iteration count must be at least 1")]
    NoIterations,
    #[error("label space: {0}")]
    LabelSpace(String),
    #[error("golden labels: {0}")]
    Golden(#[from] RuleError),
    #[error("selected wall {0:?} is not in the model")]
    UnknownWall(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    /// The backend could not answer at all (configuration or dispatch).
    #[error("iteration {iteration}: {error}")]
    Backend { iteration: u32, error: ProposeError },
}

/// Inputs to an evaluation run besides the model and backend.
#[derive(Debug, Clone, Default)]
pub struct EvalSettings {
    pub classes: ClassificationTable,
    pub rules: RuleTable,
    pub options: ProposeOptions,
}

#[derive(Debug, Clone)]
pub struct IterationFailure {
    pub iteration: u32,
    pub error: ProposeError,
}

/// Progress notifications from [`run_iterations`].
#[derive(Debug)]
pub enum IterationEvent<'a> {
    Started(u32),
    Finished(u32, &'a Result<Proposal, ProposeError>),
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub table: PredictionTable,
    pub failures: Vec<IterationFailure>,
}

/// Runs `iterations` independent proposals over `selection`. An iteration
/// whose reply is unusable (no XML, malformed, rejected) counts every wall
/// as left at its current type; a backend that cannot answer at all stops
/// the run. The callback sees each attempt start and finish (for logging).
pub fn run_iterations(
    model: &BuildingModel,
    selection: &[String],
    task: &str,
    backend: &dyn DesignBackend,
    iterations: usize,
    settings: &EvalSettings,
    mut on_event: impl FnMut(IterationEvent<'_>),
) -> Result<EvalRun, EvalError> {
    if iterations == 0 {
        return Err(EvalError::NoIterations);
    }
    let golden = derive_golden_labels(model, &settings.classes, &settings.rules)?;
    let current = model.wall_types();
    for id in selection {
        if !current.contains_key(id) {
            return Err(EvalError::UnknownWall(id.clone()));
        }
    }
    let mut columns: Vec<std::collections::BTreeMap<String, String>> = Vec::new();
    let mut failures = Vec::new();
    for k in 1..=iterations as u32 {
        let mut options = settings.options.clone();
        options.iteration = k;
        on_event(IterationEvent::Started(k));
        let outcome = propose(model, selection, task, backend, &options);
        on_event(IterationEvent::Finished(k, &outcome));
        match outcome {
            Ok(p) => columns.push(p.changeset.resulting_types(model)),
            Err(error) if matches!(error.stage, Stage::Config | Stage::Dispatch) => {
                return Err(EvalError::Backend {
                    iteration: k,
                    error,
                });
            }
            Err(error) => {
                log::error!("iteration {k}: {error}");
                columns.push(current.clone());
                failures.push(IterationFailure { iteration: k, error });
            }
        }
    }
    let rows = selection.iter().map(|id| {
        let predictions = columns.iter().map(|c| c[id].clone()).collect();
        (id.clone(), golden[id].clone(), predictions)
    });
    let table = PredictionTable::from_predictions(iterations, rows)?;
    Ok(EvalRun { table, failures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    /// Absent when fewer than two iterations were run.
    pub kappa: Option<KappaReport>,
}

/// Metrics on the majority column plus kappa over the iteration columns.
pub fn evaluate(
    table: &PredictionTable,
    space: &LabelSpace,
    averaging: Averaging,
) -> Result<Evaluation, EvalError> {
    let confusion = confusion_matrix(table, PredictionColumn::Majority, space)?;
    let metrics = classification_metrics(&confusion, averaging)?;
    let contingency = match build_contingency(table, space) {
        Ok(c) => c,
        Err(KappaError::UnknownLabel { wall_id, label }) => {
            return Err(MetricsError::UnknownLabel { wall_id, label }.into())
        }
        Err(e) => return Err(EvalError::LabelSpace(e.to_string())),
    };
    let kappa = match fleiss_kappa(&contingency, space) {
        Ok(k) => Some(k),
        Err(KappaError::TooFewRaters(_)) => None,
        Err(KappaError::NoSubjects) => return Err(MetricsError::Empty.into()),
        Err(e) => return Err(EvalError::LabelSpace(e.to_string())),
    };
    Ok(Evaluation {
        confusion,
        metrics,
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::villa;
    use crate::gaia::RuleBackend;

    const TASK: &str = "Detail all walls using the given wall types according to spatial character";

    #[test]
    fn rule_backend_scores_perfectly() {
        let m = villa();
        let mut seen = Vec::new();
        let run = run_iterations(
            &m,
            &m.wall_ids(),
            TASK,
            &RuleBackend::default(),
            5,
            &EvalSettings::default(),
            |e| {
                if let IterationEvent::Finished(k, r) = e {
                    seen.push((k, r.is_ok()))
                }
            },
        )
        .unwrap();
        assert_eq!(seen, (1..=5).map(|k| (k, true)).collect::<Vec<_>>());
        assert!(run.failures.is_empty());
        assert_eq!(run.table.len(), 48);
        let ev = evaluate(&run.table, &LabelSpace::default(), Averaging::Macro).unwrap();
        assert_eq!(ev.metrics.accuracy, 1.0);
        assert_eq!(ev.metrics.f1, 1.0);
        let kappa = ev.kappa.unwrap();
        assert_eq!(kappa.categories.len(), 5);
        assert!(kappa.categories.iter().all(|c| (c.kappa - 1.0).abs() < 1e-12));
        assert_eq!(kappa.overall_band, KappaBand::AlmostPerfect);
    }

    #[test]
    fn failed_iterations_fall_back_to_current_types() {
        struct Broken;
        impl DesignBackend for Broken {
            fn kind(&self) -> crate::gaia::BackendKind {
                crate::gaia::BackendKind::Replay
            }
            fn tag(&self) -> String {
                "broken".into()
            }
            fn respond(
                &self,
                _: &crate::gaia::PromptBundle,
                _: crate::gaia::DispatchContext<'_>,
            ) -> Result<String, crate::gaia::DispatchError> {
                Ok("no xml here".into())
            }
        }
        let m = villa();
        let run = run_iterations(&m, &m.wall_ids(), TASK, &Broken, 2, &EvalSettings::default(), |_| {})
            .unwrap();
        assert_eq!(run.failures.len(), 2);
        assert!(run
            .table
            .rows()
            .iter()
            .all(|r| r.majority == wall_types::GENERIC));
    }

    #[test]
    fn replay_miss_stops_the_run() {
        let m = villa();
        let backend = crate::gaia::ReplayBackend::new(Default::default());
        let err = run_iterations(&m, &m.wall_ids(), TASK, &backend, 3, &EvalSettings::default(), |_| {})
            .unwrap_err();
        match err {
            EvalError::Backend { iteration: 1, error } => assert_eq!(error.stage, Stage::Dispatch),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_iteration_has_no_kappa() {
        let m = villa();
        let run = run_iterations(
            &m,
            &m.wall_ids(),
            TASK,
            &RuleBackend::default(),
            1,
            &EvalSettings::default(),
            |_| {},
        )
        .unwrap();
        let ev = evaluate(&run.table, &LabelSpace::default(), Averaging::Macro).unwrap();
        assert!(ev.kappa.is_none());
    }

    #[test]
    fn label_space_checks() {
        assert!(LabelSpace::new(vec![]).is_err());
        assert!(LabelSpace::new(vec!["a".into(), "a".into()]).is_err());
        assert!(LabelSpace::with_kappa_rows(vec!["a".into()], vec![1]).is_err());
        let s = LabelSpace::default();
        assert_eq!(s.index_of(wall_types::GYPSUM), Some(5));
        assert_eq!(s.index_of("nope"), None);
    }
}
