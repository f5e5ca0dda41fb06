//! Chat-completions client for any OpenAI-compatible endpoint.

use std::thread;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::backend::{
    BackendConfig, BackendKind, ConfigError, DesignBackend, DispatchContext, DispatchError,
    HttpFailure,
};
use super::prompt::PromptBundle;

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: Vec<ChatMessage<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

pub struct LlmBackend {
    config: BackendConfig,
    api_key: String,
    agent: Agent,
}

impl LlmBackend {
    pub fn new(config: BackendConfig) -> Result<Self, DispatchError> {
        config.validate()?;
        let api_key = config.api_key.clone().ok_or(ConfigError::MissingCredential)?;
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.request_timeout))
            .build()
            .into();
        Ok(LlmBackend {
            config,
            api_key,
            agent,
        })
    }

    pub fn url(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.config.endpoint.trim_end_matches('/')
        )
    }

    fn request_body<'a>(&'a self, bundle: &'a PromptBundle) -> ChatRequest<'a> {
        ChatRequest {
            model: &self.config.params.model,
            temperature: self.config.params.temperature,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: &bundle.system_instruction,
                },
                ChatMessage {
                    role: "user",
                    content: &bundle.user_message,
                },
            ],
            max_tokens: self.config.params.max_tokens,
        }
    }

    /// One HTTP exchange. `Ok(Err(status, body))` is a non-success reply.
    fn attempt(&self, body: &ChatRequest<'_>) -> Result<Result<String, (u16, String)>, String> {
        let response = self
            .agent
            .post(&self.url())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let text = response
            .into_body()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        if (200..300).contains(&status) {
            Ok(Ok(text))
        } else {
            Ok(Err((status, text)))
        }
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

pub(crate) fn parse_chat_response(text: &str) -> Result<String, DispatchError> {
    let parsed: ChatResponse =
        serde_json::from_str(text).map_err(|e| DispatchError::BadResponse(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| DispatchError::BadResponse("no choices[0].message.content".into()))
}

impl DesignBackend for LlmBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Llm
    }

    fn tag(&self) -> String {
        format!("llm:{}", self.config.params.model)
    }

    fn respond(&self, bundle: &PromptBundle, _ctx: DispatchContext<'_>) -> Result<String, DispatchError> {
        let body = self.request_body(bundle);
        let max = self.config.retry.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            let outcome = self.attempt(&body);
            let retry = match &outcome {
                Err(_) => true,
                Ok(Err((status, _))) => retryable(*status),
                Ok(Ok(_)) => false,
            };
            if retry && attempt < max {
                log::warn!("chat completion attempt {attempt}/{max} failed; retrying");
                thread::sleep(self.config.retry.backoff(attempt));
                attempt += 1;
                continue;
            }
            return match outcome {
                Ok(Ok(text)) => parse_chat_response(&text),
                Ok(Err((status, body))) => Err(DispatchError::Http {
                    status,
                    kind: HttpFailure::from_status(status),
                    attempts: attempt,
                    body: truncate(&body, 500),
                }),
                Err(message) => Err(DispatchError::Transport {
                    attempts: attempt,
                    message,
                }),
            };
        }
    }
}

fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &s[..end])
}
