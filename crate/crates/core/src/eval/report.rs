//! Plain-text evaluation report.

use std::fmt::Write;

use super::{Evaluation, LabelSpace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportContext {
    pub task: String,
    pub backend: String,
    pub iterations: usize,
    pub walls: usize,
    /// 1-based indices of iterations that produced no usable proposal.
    pub failed_iterations: Vec<u32>,
}

fn section(out: &mut String, title: &str) {
    let _ = writeln!(out, "\n{title}\n{}", "-".repeat(title.len()));
}

pub fn render_report(ctx: &ReportContext, space: &LabelSpace, ev: &Evaluation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Wall detailing evaluation\n=========================");
    let _ = writeln!(out, "task:        {}", ctx.task);
    let _ = writeln!(out, "backend:     {}", ctx.backend);
    let _ = writeln!(out, "iterations:  {}", ctx.iterations);
    let _ = writeln!(out, "walls:       {}", ctx.walls);
    let failed = if ctx.failed_iterations.is_empty() {
        "none".to_string()
    } else {
        ctx.failed_iterations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    };
    let _ = writeln!(out, "failed:      {failed}");
    let _ = writeln!(
        out,
        "scoring:     majority vote per wall (ties: earliest label), {} averaging",
        ev.metrics.averaging
    );

    section(&mut out, "Performance metrics");
    let _ = writeln!(out, "{:<12}{:>6}", "Metric", "Value");
    for (name, value) in [
        ("Accuracy", ev.metrics.accuracy),
        ("Precision", ev.metrics.precision),
        ("Recall", ev.metrics.recall),
        ("F1-score", ev.metrics.f1),
    ] {
        let _ = writeln!(out, "{name:<12}{value:>6.2}");
    }

    let width = space.labels().iter().map(String::len).max().unwrap_or(0).max(5);
    section(&mut out, "Per-class metrics");
    let _ = writeln!(
        out,
        "{:<3} {:<width$} {:>7} {:>9} {:>9} {:>7} {:>7}",
        "#", "Label", "Support", "Predicted", "Precision", "Recall", "F1"
    );
    for (i, c) in ev.metrics.per_class.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:<3} {:<width$} {:>7} {:>9} {:>9.4} {:>7.4} {:>7.4}",
            i, c.label, c.support, c.predicted, c.precision, c.recall, c.f1
        );
    }

    section(&mut out, "Confusion matrix (rows: golden, columns: predicted)");
    let k = ev.confusion.size();
    let _ = write!(out, "{:>4}", "");
    for j in 0..k {
        let _ = write!(out, "{j:>5}");
    }
    out.push('\n');
    for (i, row) in ev.confusion.counts.iter().enumerate() {
        let _ = write!(out, "{i:>4}");
        for v in row {
            let _ = write!(out, "{v:>5}");
        }
        out.push('\n');
    }
    for (i, label) in ev.confusion.labels.iter().enumerate() {
        let _ = writeln!(out, "  {i} = {label}");
    }

    section(&mut out, "Agreement across iterations (Fleiss' kappa)");
    match &ev.kappa {
        None => {
            let _ = writeln!(out, "not available: needs at least 2 iterations");
        }
        Some(kappa) => {
            let _ = writeln!(
                out,
                "kappa_j = 1 - sum_i n_ij (n - n_ij) / (N n (n - 1) p_j (1 - p_j)), N = {} walls, n = {} iterations; 0.00 when p_j is 0 or 1",
                kappa.subjects, kappa.raters
            );
            let _ = writeln!(out, "{:<width$} {:>6}  Interpretation", "Wall type", "Kappa");
            for c in &kappa.categories {
                let _ = writeln!(out, "{:<width$} {:>6.2}  {}", c.label, c.kappa, c.band);
            }
            let _ = writeln!(
                out,
                "{:<width$} {:>6.2}  {}",
                "Overall", kappa.overall, kappa.overall_band
            );
        }
    }
    out
}
