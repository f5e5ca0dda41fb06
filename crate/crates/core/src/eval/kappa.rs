//! Fleiss' kappa over iterations treated as raters, per category and overall.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::table::PredictionTable;
use super::LabelSpace;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KappaError {
    #[error("kappa needs at least 2 raters, got {0}")]
    TooFewRaters(usize),
    #[error("kappa needs at least one subject")]
    NoSubjects,
    #[error("subject {subject} has {found} ratings, expected {expected}")]
    RaggedRow {
        subject: usize,
        expected: usize,
        found: usize,
    },
    #[error("wall {wall_id:?}: label {label:?} is not in the label space")]
    UnknownLabel { wall_id: String, label: String },
    #[error("contingency has {found} categories, the label space {expected}")]
    Width { expected: usize, found: usize },
}

/// `counts[i][j]`: how many raters put subject `i` in category `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub raters: usize,
    pub categories: usize,
    pub counts: Vec<Vec<usize>>,
}

impl Contingency {
    /// Checks that every row has `categories` cells summing to `raters`.
    pub fn new(raters: usize, categories: usize, counts: Vec<Vec<usize>>) -> Result<Self, KappaError> {
        for (i, row) in counts.iter().enumerate() {
            let found: usize = row.iter().sum();
            if found != raters || row.len() != categories {
                return Err(KappaError::RaggedRow {
                    subject: i,
                    expected: raters,
                    found,
                });
            }
        }
        Ok(Contingency {
            raters,
            categories,
            counts,
        })
    }

    pub fn subjects(&self) -> usize {
        self.counts.len()
    }

    /// Count of category `j` over all ratings.
    pub fn category_total(&self, j: usize) -> usize {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

/// One row per wall, one column per label, counted over the iteration columns.
pub fn build_contingency(table: &PredictionTable, space: &LabelSpace) -> Result<Contingency, KappaError> {
    let mut counts = Vec::with_capacity(table.len());
    for row in table.rows() {
        let mut c = vec![0usize; space.len()];
        for label in &row.predictions {
            let j = space.index_of(label).ok_or_else(|| KappaError::UnknownLabel {
                wall_id: row.wall_id.clone(),
                label: label.clone(),
            })?;
            c[j] += 1;
        }
        counts.push(c);
    }
    Contingency::new(table.iterations(), space.len(), counts)
}

fn check(c: &Contingency) -> Result<(), KappaError> {
    if c.raters < 2 {
        return Err(KappaError::TooFewRaters(c.raters));
    }
    if c.counts.is_empty() {
        return Err(KappaError::NoSubjects);
    }
    Ok(())
}

/// kappa_j = 1 - sum_i n_ij (n - n_ij) / (N n (n - 1) p_j (1 - p_j)).
/// Defined as 0 when p_j is 0 or 1.
pub fn category_kappa(c: &Contingency, j: usize) -> f64 {
    let n = c.raters;
    let total = c.subjects() * n;
    let used = c.category_total(j);
    if used == 0 || used == total {
        return 0.0;
    }
    let p = used as f64 / total as f64;
    let disagreement: usize = c.counts.iter().map(|r| r[j] * (n - r[j])).sum();
    let denom = c.subjects() as f64 * n as f64 * (n - 1) as f64 * p * (1.0 - p);
    1.0 - disagreement as f64 / denom
}

/// Fleiss' overall kappa, (P - Pe) / (1 - Pe). Defined as 0 when every
/// rating falls in a single category.
pub fn overall_kappa(c: &Contingency) -> f64 {
    let n = c.raters;
    let total = (c.subjects() * n) as f64;
    let pe: f64 = (0..c.categories)
        .map(|j| {
            let p = c.category_total(j) as f64 / total;
            p * p
        })
        .sum();
    if (0..c.categories).any(|j| c.category_total(j) == c.subjects() * n) {
        return 0.0;
    }
    let agreement: usize = c
        .counts
        .iter()
        .flat_map(|r| r.iter().map(|&x| x * x.saturating_sub(1)))
        .sum();
    let p_bar = agreement as f64 / (c.subjects() * n * (n - 1)) as f64;
    (p_bar - pe) / (1.0 - pe)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaBand {
    NoAgreement,
    Minimal,
    Weak,
    Moderate,
    Strong,
    AlmostPerfect,
}

impl KappaBand {
    pub fn as_str(self) -> &'static str {
        match self {
            KappaBand::NoAgreement => "no agreement",
            KappaBand::Minimal => "minimal",
            KappaBand::Weak => "weak",
            KappaBand::Moderate => "moderate",
            KappaBand::Strong => "strong",
            KappaBand::AlmostPerfect => "almost perfect",
        }
    }
}

impl fmt::Display for KappaBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// McHugh's bands, applied to the value rounded to two decimals:
/// <=0.20 none, 0.21-0.39 minimal, 0.40-0.59 weak, 0.60-0.79 moderate,
/// 0.80-0.90 strong, above 0.90 almost perfect. Negative values are "none".
pub fn interpret_kappa(value: f64) -> KappaBand {
    let v = (value * 100.0).round() / 100.0;
    if v.is_nan() || v < 0.21 {
        KappaBand::NoAgreement
    } else if v < 0.40 {
        KappaBand::Minimal
    } else if v < 0.60 {
        KappaBand::Weak
    } else if v < 0.80 {
        KappaBand::Moderate
    } else if v <= 0.90 {
        KappaBand::Strong
    } else {
        KappaBand::AlmostPerfect
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryKappa {
    pub label: String,
    pub proportion: f64,
    pub kappa: f64,
    pub band: KappaBand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub subjects: usize,
    pub raters: usize,
    /// In the label space's report order.
    pub categories: Vec<CategoryKappa>,
    pub overall: f64,
    pub overall_band: KappaBand,
}

/// Per-category kappa for the space's report rows, plus the overall value.
/// `c` must have one column per label in `space`.
pub fn fleiss_kappa(c: &Contingency, space: &LabelSpace) -> Result<KappaReport, KappaError> {
    check(c)?;
    if c.categories != space.len() {
        return Err(KappaError::Width {
            expected: space.len(),
            found: c.categories,
        });
    }
    let total = (c.subjects() * c.raters) as f64;
    let categories = space
        .kappa_rows()
        .iter()
        .map(|&j| {
            let kappa = category_kappa(c, j);
            CategoryKappa {
                label: space.labels()[j].clone(),
                proportion: c.category_total(j) as f64 / total,
                kappa,
                band: interpret_kappa(kappa),
            }
        })
        .collect();
    let overall = overall_kappa(c);
    Ok(KappaReport {
        subjects: c.subjects(),
        raters: c.raters,
        categories,
        overall,
        overall_band: interpret_kappa(overall),
    })
}
