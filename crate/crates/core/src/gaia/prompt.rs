//! Prompt assembly: the predefined instruction plus the user's task and the
//! exported XML.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::xml::ExportedXml;

pub const DEFAULT_TEMPLATE: &str = include_str!("../../data/instruction_v1.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("the design task is empty")]
    EmptyTask,
    #[error("the exported model has no wall types to choose from")]
    EmptyLibrary,
    #[error("template: {0}")]
    Template(String),
}

/// Instruction template. Text file with a `# version:` header, a `[system]`
/// section and a `[user]` section. Placeholders: `{allowed_types}` in the
/// system part, `{task}` and `{xml}` in the user part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub system: String,
    pub user: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let lines: Vec<&str> = text.lines().collect();
        let marker = |name: &str| {
            lines
                .iter()
                .position(|l| l.trim_end() == name)
                .ok_or_else(|| PromptError::Template(format!("missing {name} section")))
        };
        let system_at = marker("[system]")?;
        let user_at = marker("[user]")?;
        if user_at < system_at {
            return Err(PromptError::Template("[system] must come before [user]".into()));
        }
        let version = lines[..system_at]
            .iter()
            .find_map(|l| l.strip_prefix("# version:"))
            .map(|v| v.trim().to_string())
            .unwrap_or_default();
        let system = lines[system_at + 1..user_at].join("\n").trim().to_string();
        let user = lines[user_at + 1..].join("\n").trim_end().to_string();
        if !user.contains("{task}") || !user.contains("{xml}") {
            return Err(PromptError::Template(
                "the [user] section must contain {task} and {xml}".into(),
            ));
        }
        if !system.contains("{allowed_types}") {
            return Err(PromptError::Template(
                "the [system] section must contain {allowed_types}".into(),
            ));
        }
        if version.is_empty() {
            return Err(PromptError::Template("missing '# version:' header".into()));
        }
        Ok(PromptTemplate {
            version,
            system,
            user,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            model: String::new(),
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_instruction: String,
    pub user_message: String,
    /// The exchange document embedded in `user_message`.
    pub document: String,
    pub allowed_types: Vec<String>,
    pub template_version: String,
    pub metadata: GenerationParams,
}

pub fn assemble_prompt(
    exported: &ExportedXml,
    task: &str,
    library: &[String],
    template: &PromptTemplate,
) -> Result<PromptBundle, PromptError> {
    let task = task.trim();
    if task.is_empty() {
        return Err(PromptError::EmptyTask);
    }
    if library.is_empty() {
        return Err(PromptError::EmptyLibrary);
    }
    let allowed = library
        .iter()
        .map(|t| format!("   - {t}"))
        .collect::<Vec<_>>()
        .join("\n");
    let document = exported.text.trim_end().to_string();
    Ok(PromptBundle {
        system_instruction: template.system.replace("{allowed_types}", &allowed),
        user_message: template
            .user
            .replace("{task}", task)
            .replace("{xml}", &document),
        document,
        allowed_types: library.to_vec(),
        template_version: template.version.clone(),
        metadata: GenerationParams::default(),
    })
}
