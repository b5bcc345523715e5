use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::{Backend, BackendError, BackendRequest, BackendResponse, CallRole, RequestTag};

#[derive(Debug, Error)]
pub enum MockScriptError {
    #[error("invalid mock script: {0}")]
    Parse(String),
    #[error("mock script entry {0} is defined twice")]
    Duplicate(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Scripted backend. Responses are a pure function of the request tag.
///
/// Lookup order: exact `(utterance, round, role)`, then `(utterance, any
/// round, role)`, then the per-role default, then the global default.
///
/// Script files are TOML:
///
/// ```toml
/// default = "neutral"
///
/// [role_defaults]
/// disc = "ACCEPT"
///
/// [[response]]
/// utterance = "d1#0"
/// round = 1          # omit to match every round
/// role = "gen"
/// content = "Emotion: anger"
/// ```
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    exact: HashMap<(String, u32, CallRole), String>,
    any_round: HashMap<(String, CallRole), String>,
    role_defaults: HashMap<CallRole, String>,
    default: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    default: Option<String>,
    #[serde(default)]
    role_defaults: HashMap<CallRole, String>,
    #[serde(default)]
    response: Vec<RawEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    utterance: String,
    round: Option<u32>,
    role: CallRole,
    content: String,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(mut self, content: impl Into<String>) -> Self {
        self.default = Some(content.into());
        self
    }

    pub fn with_role_default(mut self, role: CallRole, content: impl Into<String>) -> Self {
        self.role_defaults.insert(role, content.into());
        self
    }

    /// Adds an exact-tag response, replacing any previous one for that tag.
    pub fn respond(mut self, utterance: &str, round: u32, role: CallRole, content: impl Into<String>) -> Self {
        self.exact.insert((utterance.to_string(), round, role), content.into());
        self
    }

    pub fn respond_every_round(mut self, utterance: &str, role: CallRole, content: impl Into<String>) -> Self {
        self.any_round.insert((utterance.to_string(), role), content.into());
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self, MockScriptError> {
        let raw: RawScript = toml::from_str(text).map_err(|e| MockScriptError::Parse(e.to_string()))?;
        let mut mock = Self {
            role_defaults: raw.role_defaults,
            default: raw.default,
            ..Self::default()
        };
        for entry in raw.response {
            let duplicate = match entry.round {
                Some(round) => mock
                    .exact
                    .insert((entry.utterance.clone(), round, entry.role), entry.content)
                    .is_some(),
                None => mock
                    .any_round
                    .insert((entry.utterance.clone(), entry.role), entry.content)
                    .is_some(),
            };
            if duplicate {
                let round = entry.round.map_or("*".to_string(), |r| r.to_string());
                return Err(MockScriptError::Duplicate(format!(
                    "({}, {}, {})",
                    entry.utterance,
                    round,
                    entry.role.as_str()
                )));
            }
        }
        Ok(mock)
    }

    pub fn load(path: &Path) -> Result<Self, MockScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| MockScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn lookup(&self, tag: &RequestTag) -> Option<&str> {
        self.exact
            .get(&(tag.utterance.clone(), tag.round, tag.role))
            .or_else(|| self.any_round.get(&(tag.utterance.clone(), tag.role)))
            .or_else(|| self.role_defaults.get(&tag.role))
            .or(self.default.as_ref())
            .map(String::as_str)
    }
}

impl Backend for MockBackend {
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        req.validate()?;
        let content = self
            .lookup(&req.tag)
            .ok_or_else(|| BackendError::ScriptMiss(req.tag.clone()))?;
        Ok(BackendResponse {
            content: content.to_string(),
            latency: Duration::ZERO,
            raw_status: 200,
            attempts: 1,
        })
    }

    fn name(&self) -> &str {
        "mock"
    }
}
