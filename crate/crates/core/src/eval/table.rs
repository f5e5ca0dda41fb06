//! Per-wall prediction table and its CSV form:
//! `wall_id,golden,iter_1,...,iter_n,majority`, rows sorted by wall id.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Modal label; ties go to the label whose first occurrence comes earliest.
/// Returns `None` only for an empty slice.
pub fn majority_vote<S: AsRef<str>>(labels: &[S]) -> Option<String> {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (i, label) in labels.iter().enumerate() {
        let entry = counts.entry(label.as_ref()).or_insert((0, i));
        entry.0 += 1;
    }
    counts
        .into_iter()
        .max_by(|(_, (ca, fa)), (_, (cb, fb))| ca.cmp(cb).then(fb.cmp(fa)))
        .map(|(label, _)| label.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub wall_id: String,
    pub golden: String,
    pub predictions: Vec<String>,
    pub majority: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionTable {
    iterations: usize,
    rows: Vec<PredictionRow>,
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("iteration count must be at least 1")]
    NoIterations,
    #[error("wall {wall_id:?} has {found} predictions, expected {expected}")]
    RaggedRow {
        wall_id: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate wall id {0:?}")]
    DuplicateWall(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV line {line}{}: {message}", .column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Csv {
        line: u64,
        column: Option<usize>,
        message: String,
    },
}

impl PredictionTable {
    /// Builds a table from (wall id, golden, per-iteration predictions),
    /// computing the majority column and sorting by wall id.
    pub fn from_predictions(
        iterations: usize,
        rows: impl IntoIterator<Item = (String, String, Vec<String>)>,
    ) -> Result<Self, TableError> {
        if iterations == 0 {
            return Err(TableError::NoIterations);
        }
        let mut out = Vec::new();
        for (wall_id, golden, predictions) in rows {
            if predictions.len() != iterations {
                return Err(TableError::RaggedRow {
                    wall_id,
                    expected: iterations,
                    found: predictions.len(),
                });
            }
            let majority = majority_vote(&predictions).expect("non-empty");
            out.push(PredictionRow {
                wall_id,
                golden,
                predictions,
                majority,
            });
        }
        out.sort_by(|a, b| a.wall_id.cmp(&b.wall_id));
        for pair in out.windows(2) {
            if pair[0].wall_id == pair[1].wall_id {
                return Err(TableError::DuplicateWall(pair[0].wall_id.clone()));
            }
        }
        Ok(PredictionTable {
            iterations,
            rows: out,
        })
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn rows(&self) -> &[PredictionRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv_string(&self) -> String {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        let mut header = vec!["wall_id".to_string(), "golden".to_string()];
        header.extend((1..=self.iterations).map(|i| format!("iter_{i}")));
        header.push("majority".to_string());
        writer.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut record = vec![row.wall_id.as_str(), row.golden.as_str()];
            record.extend(row.predictions.iter().map(String::as_str));
            record.push(row.majority.as_str());
            writer.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn from_csv_str(text: &str) -> Result<Self, TableError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let csv_err = |e: csv::Error| TableError::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            column: None,
            message: e.to_string(),
        };
        let header = match records.next() {
            Some(r) => r.map_err(csv_err)?,
            None => {
                return Err(TableError::Csv {
                    line: 1,
                    column: None,
                    message: "missing header".into(),
                })
            }
        };
        let iterations = parse_header(&header)?;
        let mut rows = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for record in records {
            let record = record.map_err(csv_err)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != iterations + 3 {
                return Err(TableError::Csv {
                    line,
                    column: None,
                    message: format!(
                        "expected {} fields ({} iterations), found {}",
                        iterations + 3,
                        iterations,
                        record.len()
                    ),
                });
            }
            let fields: Vec<String> = record.iter().map(str::to_string).collect();
            let wall_id = fields[0].clone();
            if !seen.insert(wall_id.clone()) {
                return Err(TableError::Csv {
                    line,
                    column: Some(1),
                    message: format!("duplicate wall id {wall_id:?}"),
                });
            }
            let predictions = fields[2..2 + iterations].to_vec();
            let majority = fields[2 + iterations].clone();
            let expected = majority_vote(&predictions).expect("non-empty");
            if majority != expected {
                return Err(TableError::Csv {
                    line,
                    column: Some(iterations + 3),
                    message: format!(
                        "majority {majority:?} disagrees with the iteration columns (expected {expected:?})"
                    ),
                });
            }
            rows.push((wall_id, fields[1].clone(), predictions));
        }
        Self::from_predictions(iterations, rows)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), TableError> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|source| TableError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, TableError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv_str(&text)
    }
}

fn parse_header(header: &csv::StringRecord) -> Result<usize, TableError> {
    let bad = |column: usize, message: String| TableError::Csv {
        line: 1,
        column: Some(column),
        message,
    };
    let n = header.len();
    if n < 4 {
        return Err(bad(n.max(1), "header needs wall_id, golden, iter_1.., majority".into()));
    }
    if &header[0] != "wall_id" {
        return Err(bad(1, format!("expected \"wall_id\", found {:?}", &header[0])));
    }
    if &header[1] != "golden" {
        return Err(bad(2, format!("expected \"golden\", found {:?}", &header[1])));
    }
    if &header[n - 1] != "majority" {
        return Err(bad(n, format!("expected \"majority\", found {:?}", &header[n - 1])));
    }
    for (i, name) in header.iter().enumerate().take(n - 1).skip(2) {
        let expected = format!("iter_{}", i - 1);
        if name != expected {
            return Err(bad(i + 1, format!("expected {expected:?}, found {name:?}")));
        }
    }
    Ok(n - 3)
}
