//! Python bindings: `import gaia_bim`.
//!
//! Structured results (change sets, metrics, kappa reports) come back as
//! plain dicts and lists.

use std::collections::BTreeMap;

use gaia_core::classify::ClassificationTable;
use gaia_core::eval::{
    category_kappa, evaluate as evaluate_table, interpret_kappa as band, majority_vote as vote,
    overall_kappa, render_report, run_iterations, Averaging, Contingency, EvalSettings, LabelSpace,
    PredictionTable, ReportContext,
};
use gaia_core::fixture;
use gaia_core::gaia::{build_backend, propose as run_propose, BackendConfig, ProposeOptions};
use gaia_core::model::{BuildingModel, SpaceClass};
use gaia_core::project::{load_project, parse_project, project_to_string, save_project};
use gaia_core::rules::{derive_golden_labels, rule_rewrite as rewrite, RuleTable, TypeDecision};
use gaia_core::xml::{apply_changeset, export_xml, parse_xml as parse_doc, ChangeSet};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(gaia_bim, GaiaError, PyException);

fn fail(e: impl std::fmt::Display) -> PyErr {
    GaiaError::new_err(e.to_string())
}

/// Serializes through JSON into native Python objects.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(fail)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: serde::de::DeserializeOwned>(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(fail)
}

fn space_class(name: &str) -> PyResult<SpaceClass> {
    SpaceClass::ALL
        .into_iter()
        .find(|c| c.as_str().eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| fail(format!("unknown space class {name:?} (indoor, outdoor, wet)")))
}

fn backend_config(kind: &str, replay: Option<String>) -> PyResult<BackendConfig> {
    match kind {
        "rule" => Ok(BackendConfig::rule()),
        "replay" => replay
            .map(BackendConfig::replay)
            .ok_or_else(|| fail("the replay backend needs a log path")),
        "llm" => Ok(BackendConfig::llm_from_env()),
        other => Err(fail(format!("unknown backend {other:?} (rule, replay, llm)"))),
    }
}

fn averaging(name: &str) -> PyResult<Averaging> {
    name.parse().map_err(fail)
}

/// A building model: rooms, walls and the wall-type library.
#[pyclass(name = "Model", module = "gaia_bim", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: BuildingModel,
}

#[pymethods]
impl PyModel {
    /// The bundled 48-wall villa fixture.
    #[staticmethod]
    fn villa() -> Self {
        PyModel {
            inner: fixture::villa(),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: load_project(path).map_err(fail)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: parse_project(text).map_err(fail)?,
        })
    }

    fn to_json(&self) -> String {
        project_to_string(&self.inner)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_project(&self.inner, path).map_err(fail)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn wall_ids(&self) -> Vec<String> {
        self.inner.wall_ids()
    }

    fn wall_types(&self) -> BTreeMap<String, String> {
        self.inner.wall_types()
    }

    fn library(&self) -> Vec<String> {
        self.inner.library.iter().map(|t| t.name.clone()).collect()
    }

    /// Exchange XML for the selected walls (all walls by default).
    #[pyo3(signature = (selection=None))]
    fn export_xml(&self, selection: Option<Vec<String>>) -> PyResult<String> {
        let selection = selection.unwrap_or_else(|| self.inner.wall_ids());
        Ok(export_xml(&self.inner, &selection).map_err(fail)?.text)
    }

    /// Reference type for every wall under the default detailing rules.
    fn golden_labels(&self) -> PyResult<BTreeMap<String, String>> {
        derive_golden_labels(&self.inner, &ClassificationTable::default(), &RuleTable::default())
            .map_err(fail)
    }

    /// Runs one proposal and returns it as a dict (`changeset`,
    /// `validation`, `raw_response`, ...). Failures raise `GaiaError`
    /// with a `[stage]` prefix.
    #[pyo3(signature = (task, backend="rule", selection=None, replay=None, iteration=1))]
    fn propose(
        &self,
        py: Python<'_>,
        task: &str,
        backend: &str,
        selection: Option<Vec<String>>,
        replay: Option<String>,
        iteration: u32,
    ) -> PyResult<Py<PyAny>> {
        let config = backend_config(backend, replay)?;
        let backend = build_backend(&config, &ClassificationTable::default(), &RuleTable::default())
            .map_err(fail)?;
        let selection = selection.unwrap_or_else(|| self.inner.wall_ids());
        let options = ProposeOptions {
            params: config.params.clone(),
            iteration,
            ..ProposeOptions::default()
        };
        let proposal = py
            .detach(|| run_propose(&self.inner, &selection, task, backend.as_ref(), &options))
            .map_err(fail)?;
        to_py(py, &proposal)
    }

    /// New model with a change set (dict, as returned in a proposal)
    /// applied. All or nothing.
    fn apply(&self, py: Python<'_>, changeset: &Bound<'_, PyAny>) -> PyResult<Self> {
        let cs: ChangeSet = from_py(py, changeset)?;
        Ok(PyModel {
            inner: apply_changeset(&self.inner, &cs).map_err(fail)?,
        })
    }

    /// Repeats a task and scores it; returns metrics, confusion matrix,
    /// kappa, the predictions CSV and the text report.
    #[pyo3(signature = (task, iterations=5, backend="rule", replay=None, averaging="macro"))]
    fn evaluate(
        &self,
        py: Python<'_>,
        task: &str,
        iterations: usize,
        backend: &str,
        replay: Option<String>,
        averaging: &str,
    ) -> PyResult<Py<PyAny>> {
        let avg = self::averaging(averaging)?;
        let config = backend_config(backend, replay)?;
        let settings = EvalSettings::default();
        let backend = build_backend(&config, &settings.classes, &settings.rules).map_err(fail)?;
        let selection = self.inner.wall_ids();
        let space = LabelSpace::default();
        let (run, ev) = py.detach(|| {
            let run = run_iterations(
                &self.inner,
                &selection,
                task,
                backend.as_ref(),
                iterations,
                &settings,
                |_| {},
            )?;
            let ev = evaluate_table(&run.table, &space, avg)?;
            Ok::<_, gaia_core::eval::EvalError>((run, ev))
        })
        .map_err(fail)?;
        let ctx = ReportContext {
            task: task.trim().to_string(),
            backend: backend.tag(),
            iterations,
            walls: run.table.len(),
            failed_iterations: run.failures.iter().map(|f| f.iteration).collect(),
        };
        let out = serde_json::json!({
            "metrics": ev.metrics,
            "confusion": ev.confusion,
            "kappa": ev.kappa,
            "csv": run.table.to_csv_string(),
            "report": render_report(&ctx, &space, &ev),
            "failed_iterations": ctx.failed_iterations,
        });
        to_py(py, &out)
    }

    fn __len__(&self) -> usize {
        self.inner.walls.len()
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, {} walls)", self.inner.name, self.inner.walls.len())
    }
}

/// Parses an exchange document into a dict.
#[pyfunction]
fn parse_xml(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    to_py(py, &parse_doc(text).map_err(fail)?)
}

/// Rewrites every wall type in an exchange document by the default rules.
#[pyfunction]
fn rule_rewrite(text: &str) -> PyResult<String> {
    rewrite(text, &ClassificationTable::default(), &RuleTable::default()).map_err(fail)
}

/// Space class of a room name (`indoor`, `outdoor` or `wet`).
#[pyfunction]
fn classify(name: &str) -> PyResult<String> {
    ClassificationTable::default()
        .classify_name(name)
        .map(|c| c.as_str().to_string())
        .map_err(|u| fail(format!("unclassified space {:?}", u.name)))
}

/// Wall type for two space classes, or None when the rules leave it alone.
#[pyfunction]
fn golden_type(a: &str, b: &str) -> PyResult<Option<String>> {
    Ok(
        match RuleTable::default().golden_type(space_class(a)?, space_class(b)?) {
            TypeDecision::Assign(t) => Some(t),
            TypeDecision::NoChange => None,
        },
    )
}

#[pyfunction]
fn majority_vote(labels: Vec<String>) -> Option<String> {
    vote(&labels)
}

#[pyfunction]
fn interpret_kappa(value: f64) -> &'static str {
    band(value).as_str()
}

/// Per-category and overall Fleiss kappa from a subjects x categories
/// count table.
#[pyfunction]
fn fleiss_kappa(py: Python<'_>, counts: Vec<Vec<usize>>) -> PyResult<Py<PyAny>> {
    let raters = counts.first().map(|r| r.iter().sum()).unwrap_or(0);
    let categories = counts.first().map(Vec::len).unwrap_or(0);
    if raters < 2 || counts.is_empty() {
        return Err(fail("need at least one subject and two raters"));
    }
    let c = Contingency::new(raters, categories, counts).map_err(fail)?;
    let per: Vec<f64> = (0..categories).map(|j| category_kappa(&c, j)).collect();
    let out = serde_json::json!({
        "categories": per,
        "overall": overall_kappa(&c),
        "subjects": c.subjects(),
        "raters": raters,
    });
    to_py(py, &out)
}

/// Scores a predictions CSV (`wall_id,golden,iter_1..iter_n,majority`).
#[pyfunction]
#[pyo3(signature = (csv_text, averaging="macro"))]
fn evaluate_csv(py: Python<'_>, csv_text: &str, averaging: &str) -> PyResult<Py<PyAny>> {
    let table = PredictionTable::from_csv_str(csv_text).map_err(fail)?;
    let ev = evaluate_table(&table, &LabelSpace::default(), self::averaging(averaging)?)
        .map_err(fail)?;
    let out = serde_json::json!({
        "metrics": ev.metrics,
        "confusion": ev.confusion,
        "kappa": ev.kappa,
    });
    to_py(py, &out)
}

/// The six wall-type labels in report order.
#[pyfunction]
fn labels() -> Vec<String> {
    LabelSpace::default().labels().to_vec()
}

#[pymodule]
fn gaia_bim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add("GaiaError", m.py().get_type::<GaiaError>())?;
    m.add_function(wrap_pyfunction!(parse_xml, m)?)?;
    m.add_function(wrap_pyfunction!(rule_rewrite, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(golden_type, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(interpret_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(fleiss_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_csv, m)?)?;
    m.add_function(wrap_pyfunction!(labels, m)?)?;
    Ok(())
}
