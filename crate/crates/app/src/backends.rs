//! Turning user-facing backend choices into a configured backend.

use std::path::PathBuf;

use gaia_core::classify::ClassificationTable;
use gaia_core::gaia::{build_backend, BackendConfig, BackendKind, DesignBackend, DispatchError};
use gaia_core::rules::RuleTable;

#[derive(Debug, Clone, Default)]
pub struct BackendChoice {
    pub kind: Option<BackendKind>,
    pub replay: Option<PathBuf>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

impl BackendChoice {
    pub fn kind(&self) -> BackendKind {
        self.kind.unwrap_or(BackendKind::Rule)
    }

    /// Rule and replay need no environment; the LLM reads its endpoint,
    /// credential and model from `GAIA_*` variables, then applies overrides.
    pub fn config(&self) -> BackendConfig {
        let mut config = match self.kind() {
            BackendKind::Rule => BackendConfig::rule(),
            BackendKind::Replay => match &self.replay {
                Some(p) => BackendConfig::replay(p),
                None => {
                    let mut c = BackendConfig::replay(PathBuf::new());
                    c.replay_source = None;
                    c
                }
            },
            BackendKind::Llm => BackendConfig::llm_from_env(),
        };
        if let Some(m) = &self.model {
            config.params.model = m.clone();
        }
        if let Some(t) = self.temperature {
            config.params.temperature = t;
        }
        if self.max_tokens.is_some() {
            config.params.max_tokens = self.max_tokens;
        }
        config
    }

    pub fn build(
        &self,
        classes: &ClassificationTable,
        rules: &RuleTable,
    ) -> Result<Box<dyn DesignBackend>, DispatchError> {
        build_backend(&self.config(), classes, rules)
    }
}
