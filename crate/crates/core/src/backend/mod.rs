//! Chat-completion backends.
//!
//! [`Backend`] is a blocking, thread-safe interface. Two implementations ship:
//! [`MockBackend`], a scripted table keyed by [`RequestTag`], and
//! [`OpenAiClient`], which speaks the `/v1/chat/completions` wire protocol.

mod extract;
mod mock;
mod openai;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{extract_label, ExtractionPolicy, LabelExtraction, LabelExtractor};
pub use mock::{MockBackend, MockScriptError};
pub use openai::{OpenAiClient, OpenAiConfig, RetryPolicy, API_KEY_ENV, BASE_URL_ENV};

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            content: content.into(),
        }
    }
}

/// Which step of a negotiation a call belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CallRole {
    #[serde(rename = "gen")]
    Generator,
    #[serde(rename = "disc")]
    Discriminator,
    #[serde(rename = "ded")]
    Deduction,
}

impl CallRole {
    pub fn as_str(self) -> &'static str {
        match self {
            CallRole::Generator => "gen",
            CallRole::Discriminator => "disc",
            CallRole::Deduction => "ded",
        }
    }
}

/// Correlation key for one logical backend call.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestTag {
    pub utterance: String,
    /// Negotiation round, 1-based. Deduction calls use round 0.
    pub round: u32,
    pub role: CallRole,
}

impl RequestTag {
    pub fn new(utterance: impl Into<String>, round: u32, role: CallRole) -> Self {
        Self {
            utterance: utterance.into(),
            round,
            role,
        }
    }
}

impl fmt::Display for RequestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.utterance, self.round, self.role.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tag: RequestTag,
}

impl BackendRequest {
    /// A single user message with default sampling settings.
    pub fn prompt(content: impl Into<String>, tag: RequestTag) -> Self {
        Self {
            messages: vec![ChatMessage::user(content)],
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            tag,
        }
    }

    pub fn with_sampling(mut self, temperature: f64, max_tokens: u32) -> Self {
        self.temperature = temperature;
        self.max_tokens = max_tokens;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("request has no messages".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendResponse {
    pub content: String,
    pub latency: Duration,
    pub raw_status: u16,
    /// Number of HTTP attempts made, including the successful one.
    pub attempts: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend returned HTTP {status} after {attempts} attempt(s)")]
    HttpStatus { status: u16, attempts: u32 },
    #[error("could not decode backend response: {0}")]
    Decode(String),
    #[error("mock script has no response for {0} and no default")]
    ScriptMiss(RequestTag),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError>;

    fn name(&self) -> &str {
        "backend"
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(req)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(req)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}
