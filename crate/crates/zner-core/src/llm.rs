//! LLM endpoint access: a client trait so pipelines can run against stubs,
//! and an HTTP implementation speaking the chat-completions protocol.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error talking to {url}: {message}")]
    Transport { url: String, message: String },
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("api key environment variable {0} is not set")]
    MissingApiKey(String),
}

/// A single completion request: one prompt in, raw text out.
///
/// Implementations must be safe to call from multiple threads.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
    /// Identifier recorded in provenance (model name or stub label).
    fn model_id(&self) -> String;
}

/// 3 attempts with exponential backoff on transport errors.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
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
    /// Used by tests to avoid real sleeps.
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
        }
    }

    pub fn run<T>(
        &self,
        mut call: impl FnMut() -> Result<T, LlmError>,
    ) -> Result<T, LlmError> {
        let mut last = None;
        for attempt in 0..self.max_attempts {
            match call() {
                Ok(v) => return Ok(v),
                Err(e @ (LlmError::Transport { .. } | LlmError::Status { .. })) => {
                    if attempt + 1 < self.max_attempts {
                        std::thread::sleep(self.base_delay * 2u32.pow(attempt));
                    }
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key. Secrets never
    /// appear in config files.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    /// Sampling temperature; 0 means deterministic decoding.
    #[serde(default)]
    pub temperature: f64,
}

fn default_api_key_env() -> String {
    "ZNER_API_KEY".to_string()
}
fn default_timeout_s() -> u64 {
    120
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: String,
}

/// Blocking client for any endpoint exposing `POST {base_url}/chat/completions`.
pub struct HttpChatClient {
    config: EndpointConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    /// Reads the API key from the configured environment variable; an unset
    /// variable is an error so misconfiguration surfaces before any call.
    pub fn new(config: EndpointConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| LlmError::MissingApiKey(config.api_key_env.clone()))?;
        Self::with_key(config, Some(api_key))
    }

    /// Keyless construction for local or test endpoints.
    pub fn with_key(config: EndpointConfig, api_key: Option<String>) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| LlmError::Transport {
                url: config.base_url.clone(),
                message: e.to_string(),
            })?;
        Ok(Self {
            config,
            api_key,
            http,
        })
    }
}

impl LlmClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let request = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.config.temperature,
        };
        let mut builder = self.http.post(&url).json(&request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| LlmError::Transport {
            url: url.clone(),
            message: e.to_string(),
        })?;
        let status = response.status();
        let body = response.text().map_err(|e| LlmError::Transport {
            url: url.clone(),
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(LlmError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&body)
            .map_err(|e| LlmError::MalformedResponse(format!("{e}: {body}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::MalformedResponse("empty choices".to_string()))
    }

    fn model_id(&self) -> String {
        self.config.model.clone()
    }
}
