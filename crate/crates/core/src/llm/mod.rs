//! Completion interface over a live chat endpoint and a record/replay store.

mod live;
mod replay;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use live::{LiveBackend, LiveConfig, API_KEY_ENV};
pub use replay::{record, Recorder, ReplayStore};

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmRequest {
    pub model: String,
    pub temperature: f64,
    pub system: String,
    pub user: String,
    pub max_output_tokens: u32,
}

impl LlmRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.system.trim().is_empty() {
            return Err(LlmError::InvalidRequest("system text is empty".into()));
        }
        if self.user.trim().is_empty() {
            return Err(LlmError::InvalidRequest("user text is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    /// First 80 characters of the user text.
    pub fn user_preview(&self) -> String {
        self.user.chars().take(80).collect()
    }
}

/// Model parameters shared by every request of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            model: "gpt-4".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }
}

impl LlmSettings {
    pub fn request(&self, prompt: &crate::prompts::PromptText) -> LlmRequest {
        LlmRequest {
            model: self.model.clone(),
            temperature: self.temperature,
            system: prompt.system.clone(),
            user: prompt.user.clone(),
            max_output_tokens: self.max_output_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Normal,
    Truncated,
    Filtered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

impl LlmResponse {
    pub fn normal(content: impl Into<String>) -> Self {
        LlmResponse {
            content: content.into(),
            finish_reason: FinishReason::Normal,
            usage: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmExchange {
    pub request_hash: String,
    pub request: LlmRequest,
    pub response: LlmResponse,
    pub recorded_at: chrono::DateTime<chrono::Utc>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    TransportError { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("no fixture for request {digest} (user text: {preview:?})")]
    FixtureMiss { digest: String, preview: String },
    #[error("fixture store error: {0}")]
    StorageError(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Canonical serialization hashed by [`request_hash`]: fixed field order,
/// compact JSON, temperature as a string with three decimals.
pub fn canonical_request(req: &LlmRequest) -> String {
    let s = |v: &str| serde_json::to_string(v).expect("string serializes");
    format!(
        "{{\"model\":{},\"temperature\":\"{:.3}\",\"max_output_tokens\":{},\"system\":{},\"user\":{}}}",
        s(&req.model),
        req.temperature,
        req.max_output_tokens,
        s(&req.system),
        s(&req.user)
    )
}

/// Lowercase hex SHA-256 of [`canonical_request`].
pub fn request_hash(req: &LlmRequest) -> String {
    hex::encode(Sha256::digest(canonical_request(req).as_bytes()))
}

/// Anything that can answer a completion request. Implementations must be
/// safe to call from several threads at once.
pub trait Completion: Send + Sync {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

/// Adapts a closure into a backend.
pub struct FnCompletion<F>(pub F);

impl<F> Completion for FnCompletion<F>
where
    F: Fn(&LlmRequest) -> Result<LlmResponse, LlmError> + Send + Sync,
{
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (self.0)(req)
    }
}

impl<C: Completion + ?Sized> Completion for Box<C> {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (**self).complete(req)
    }
}

impl<C: Completion + ?Sized> Completion for std::sync::Arc<C> {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (**self).complete(req)
    }
}
