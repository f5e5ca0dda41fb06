//! Confusion matrix and the four summary metrics.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::table::PredictionTable;
use super::LabelSpace;

/// Which prediction column of a table to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionColumn {
    Majority,
    /// 1-based iteration index.
    Iteration(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Unweighted mean over classes that occur as golden or predicted labels.
    #[default]
    Macro,
    /// Mean weighted by golden support.
    Weighted,
}

impl Averaging {
    pub fn as_str(self) -> &'static str {
        match self {
            Averaging::Macro => "macro",
            Averaging::Weighted => "weighted",
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Averaging {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "macro" => Ok(Averaging::Macro),
            "weighted" => Ok(Averaging::Weighted),
            other => Err(format!("unknown averaging {other:?} (expected macro or weighted)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("wall {wall_id:?}: label {label:?} is not in the label space")]
    UnknownLabel { wall_id: String, label: String },
    #[error("iteration {0} is out of range")]
    NoSuchIteration(usize),
    #[error("the confusion matrix is empty")]
    Empty,
    #[error("the confusion matrix is not square")]
    Shape,
}

/// `counts[golden][predicted]`, indexed in label-space order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        if counts.len() != labels.len() || counts.iter().any(|r| r.len() != labels.len()) {
            return Err(MetricsError::Shape);
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

pub fn confusion_matrix(
    table: &PredictionTable,
    column: PredictionColumn,
    space: &LabelSpace,
) -> Result<ConfusionMatrix, MetricsError> {
    let k = space.len();
    let mut counts = vec![vec![0u64; k]; k];
    if let PredictionColumn::Iteration(i) = column {
        if i == 0 || i > table.iterations() {
            return Err(MetricsError::NoSuchIteration(i));
        }
    }
    for row in table.rows() {
        let predicted = match column {
            PredictionColumn::Majority => &row.majority,
            PredictionColumn::Iteration(i) => &row.predictions[i - 1],
        };
        let index = |label: &String| {
            space.index_of(label).ok_or_else(|| MetricsError::UnknownLabel {
                wall_id: row.wall_id.clone(),
                label: label.clone(),
            })
        };
        counts[index(&row.golden)?][index(predicted)?] += 1;
    }
    ConfusionMatrix::new(space.labels().to_vec(), counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub predicted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub averaging: Averaging,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision is diag/column sum, recall diag/row sum, both 0 on an empty
/// denominator; F1 is 0 when both are 0. The averaged F1 is the mean of
/// per-class F1 scores.
pub fn classification_metrics(
    cm: &ConfusionMatrix,
    averaging: Averaging,
) -> Result<MetricsReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let k = cm.size();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|i| {
            let tp = cm.counts[i][i];
            let support = cm.row_sum(i);
            let predicted = cm.col_sum(i);
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                label: cm.labels[i].clone(),
                precision,
                recall,
                f1,
                support,
                predicted,
            }
        })
        .collect();

    let weights: Vec<f64> = per_class
        .iter()
        .map(|c| match averaging {
            Averaging::Macro if c.support > 0 || c.predicted > 0 => 1.0,
            Averaging::Macro => 0.0,
            Averaging::Weighted => c.support as f64,
        })
        .collect();
    let weight_sum: f64 = weights.iter().sum();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        per_class
            .iter()
            .zip(&weights)
            .map(|(c, w)| f(c) * w)
            .sum::<f64>()
            / weight_sum
    };
    let trace: u64 = (0..k).map(|i| cm.counts[i][i]).sum();

    Ok(MetricsReport {
        averaging,
        accuracy: trace as f64 / total as f64,
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f1: mean(|c| c.f1),
        per_class,
    })
}
