use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendRequest, BackendResponse, ChatMessage};

pub const API_KEY_ENV: &str = "SENTIXRL_API_KEY";
pub const BASE_URL_ENV: &str = "SENTIXRL_BASE_URL";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for each later one.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is the 1-based attempt about to be made (>= 2)
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(2))
    }
}

#[derive(Debug, Clone)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// Cap on concurrent in-flight HTTP requests through this client.
    pub max_in_flight: usize,
}

impl OpenAiConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            max_in_flight: 8,
        }
    }

    /// Fills the credential from `SENTIXRL_API_KEY` when not already set.
    pub fn with_env_credentials(mut self) -> Self {
        if self.api_key.is_none() {
            self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        }
        self
    }
}

#[derive(Serialize)]
struct ChatCompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *permits == 0 {
            permits = self.freed.wait(permits).unwrap_or_else(|e| e.into_inner());
        }
        *permits -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Done(Result<BackendResponse, BackendError>),
    Retry(BackendError),
}

/// Blocking client for OpenAI-compatible chat-completion servers.
///
/// Retries 5xx, 429, timeouts and transport failures with exponential backoff.
/// Other statuses and undecodable bodies fail immediately.
pub struct OpenAiClient {
    agent: ureq::Agent,
    endpoint: String,
    config: OpenAiConfig,
    in_flight: Semaphore,
}

impl OpenAiClient {
    pub fn new(config: OpenAiConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let endpoint = format!("{}/v1/chat/completions", config.base_url.trim_end_matches('/'));
        Self {
            agent,
            endpoint,
            in_flight: Semaphore::new(config.max_in_flight),
            config,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, body: &ChatCompletionRequest<'_>, attempts: u32, started: Instant) -> Attempt {
        let _permit = self.in_flight.acquire();
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match call.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(BackendError::Timeout { attempts }),
            Err(e) => {
                return Attempt::Retry(BackendError::Transport {
                    message: e.to_string(),
                    attempts,
                })
            }
        };
        let status = response.status().as_u16();
        if status == 429 || (500..600).contains(&status) {
            return Attempt::Retry(BackendError::HttpStatus { status, attempts });
        }
        if !(200..300).contains(&status) {
            return Attempt::Done(Err(BackendError::HttpStatus { status, attempts }));
        }
        let parsed = response
            .body_mut()
            .read_json::<ChatCompletionResponse>()
            .map_err(|e| BackendError::Decode(e.to_string()))
            .and_then(|r| {
                r.choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| BackendError::Decode("missing choices[0].message.content".into()))
            });
        Attempt::Done(parsed.map(|content| BackendResponse {
            content,
            latency: started.elapsed(),
            raw_status: status,
            attempts,
        }))
    }
}

impl Backend for OpenAiClient {
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        req.validate()?;
        let body = ChatCompletionRequest {
            model: &self.config.model,
            messages: &req.messages,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };
        let started = Instant::now();
        let max_attempts = self.config.retry.max_attempts.max(1);
        let mut attempts = 1;
        loop {
            match self.attempt(&body, attempts, started) {
                Attempt::Done(result) => return result,
                Attempt::Retry(err) if attempts >= max_attempts => return Err(err),
                Attempt::Retry(err) => {
                    attempts += 1;
                    let delay = self.config.retry.delay_before(attempts);
                    log::debug!("{} failed ({err}); retrying in {delay:?}", req.tag);
                    std::thread::sleep(delay);
                }
            }
        }
    }

    fn name(&self) -> &str {
        "openai-compatible"
    }
}
