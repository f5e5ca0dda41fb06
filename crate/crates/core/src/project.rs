//! Project file persistence (UTF-8 JSON with `name`, `units`, `levels`,
//! `wallTypes`, `rooms`, `walls`).

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classify::canonical_type_name;
use crate::model::{validate_model, BuildingModel, Issue, IssueKind};

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("project parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("dangling room references: {}", .dangling.join(", "))]
    Integrity { dangling: Vec<String> },
    #[error("invalid project:\n{}", format_issues(.0))]
    Invalid(Vec<Issue>),
}

fn format_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses and validates project text. Type names are canonicalized.
pub fn parse_project(text: &str) -> Result<BuildingModel, ProjectError> {
    let mut model: BuildingModel =
        serde_json::from_str(text).map_err(|e| ProjectError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    canonicalize(&mut model);

    let issues = validate_model(&model);
    let mut dangling: Vec<String> = issues
        .iter()
        .filter_map(|i| match &i.kind {
            IssueKind::DanglingRoom(id) => Some(id.clone()),
            _ => None,
        })
        .collect();
    if !dangling.is_empty() {
        dangling.sort();
        dangling.dedup();
        return Err(ProjectError::Integrity { dangling });
    }
    if !issues.is_empty() {
        return Err(ProjectError::Invalid(issues));
    }
    Ok(model)
}

pub fn load_project(path: impl AsRef<Path>) -> Result<BuildingModel, ProjectError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ProjectError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_project(&text)
}

/// Canonical text form: two-space indented JSON with a trailing newline.
pub fn project_to_string(model: &BuildingModel) -> String {
    let mut text = serde_json::to_string_pretty(model).expect("model serializes");
    text.push('\n');
    text
}

/// Writes through a sibling temporary file and a rename, so readers see
/// either the old or the new project, never a partial one.
pub fn save_project(model: &BuildingModel, path: impl AsRef<Path>) -> Result<(), ProjectError> {
    let path = path.as_ref();
    let io = |source| ProjectError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "project.json".into());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    fs::write(&tmp, project_to_string(model)).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

fn canonicalize(model: &mut BuildingModel) {
    for def in &mut model.library {
        def.name = canonical_type_name(&def.name);
    }
    for wall in &mut model.walls {
        wall.type_name = canonical_type_name(&wall.type_name);
    }
}
