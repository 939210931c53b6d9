//! Text-generation providers used for query rewriting and answer generation.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::HttpClient;

pub const DEFAULT_TEXT_KEY_ENV: &str = "HRAG_LLM_API_KEY";

/// Returned by the stub generator when no documents were retrieved.
pub const STUB_ABSTENTION: &str = "I'm sorry, but I don't have enough information to answer that question.";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("text provider request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed text provider response: {0}")]
    BadResponse(String),
    #[error("invalid text provider config: {0}")]
    InvalidConfig(String),
}

/// What a request is for. Stub providers answer from these structured
/// fields; remote providers only see the rendered messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptTask {
    Rewrite { question: String },
    Generate { question: String, doc_ids: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system: Option<String>,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub task: PromptTask,
}

impl ChatRequest {
    pub fn prompt_hash(&self) -> String {
        super::prompt::prompt_hash(self.system.as_deref(), &self.user)
    }
}

pub trait TextProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

/// Deterministic offline provider.
///
/// Rewrites return the question unchanged. Generation returns
/// [`STUB_ABSTENTION`] without documents, otherwise a sentence naming the
/// document ids and a prefix of the prompt hash.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubProvider;

impl TextProvider for StubProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        Ok(match &request.task {
            PromptTask::Rewrite { question } => question.clone(),
            PromptTask::Generate { doc_ids, .. } if doc_ids.is_empty() => STUB_ABSTENTION.to_string(),
            PromptTask::Generate { doc_ids, .. } => format!(
                "Stub answer grounded in {} (prompt {}).",
                doc_ids.join(","),
                &request.prompt_hash()[..16]
            ),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextProviderConfig {
    pub kind: ProviderKind,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
}

impl Default for TextProviderConfig {
    fn default() -> Self {
        Self::generation()
    }
}

impl TextProviderConfig {
    /// Rewrite defaults: low temperature to avoid needless reformulation.
    pub fn rewrite() -> Self {
        Self { temperature: 0.2, max_tokens: 256, ..Self::generation() }
    }

    pub fn generation() -> Self {
        Self {
            kind: ProviderKind::Stub,
            model: "stub".into(),
            temperature: 0.7,
            max_tokens: 4096,
            endpoint: None,
            api_key_env: DEFAULT_TEXT_KEY_ENV.into(),
            timeout_secs: 120,
            max_attempts: 3,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::InvalidConfig(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::InvalidConfig("max_tokens must be >= 1".into()));
        }
        if self.kind == ProviderKind::Remote
            && (self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) || self.model.trim().is_empty())
        {
            return Err(ProviderError::InvalidConfig("remote provider needs an endpoint and a model".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn TextProvider>, ProviderError> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::Stub => Arc::new(StubProvider),
            ProviderKind::Remote => Arc::new(RemoteTextProvider::from_config(self)?),
        })
    }
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: Vec<Message<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ChatResponse {
    Choices { choices: Vec<Choice> },
    Text { text: String },
}

/// Chat-style HTTP provider.
///
/// Request: `{"model", "messages": [{"role", "content"}], "temperature",
/// "max_tokens"}`. Accepted responses: `{"choices": [{"message": {"content"}}]}`
/// or `{"text": ...}`.
#[derive(Debug, Clone)]
pub struct RemoteTextProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: HttpClient,
}

impl RemoteTextProvider {
    pub fn from_config(config: &TextProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| ProviderError::InvalidConfig("missing endpoint".into()))?;
        Ok(Self {
            endpoint,
            model: config.model.clone(),
            api_key: std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty()),
            client: HttpClient::new(Duration::from_secs(config.timeout_secs), config.max_attempts),
        })
    }
}

impl TextProvider for RemoteTextProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = &request.system {
            messages.push(Message { role: "system", content: system });
        }
        messages.push(Message { role: "user", content: &request.user });
        let body = ChatBody {
            model: &self.model,
            messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let response: ChatResponse = self
            .client
            .post_json(&self.endpoint, self.api_key.as_deref(), &body)
            .map_err(|f| {
                if f.retryable {
                    ProviderError::Transport { attempts: f.attempts, message: f.message }
                } else {
                    ProviderError::BadResponse(f.message)
                }
            })?;
        match response {
            ChatResponse::Text { text } => Ok(text),
            ChatResponse::Choices { choices } => choices
                .into_iter()
                .next()
                .map(|c| c.message.content)
                .ok_or_else(|| ProviderError::BadResponse("no choices".into())),
        }
    }
}
