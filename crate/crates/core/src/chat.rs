//! Minimal blocking client for OpenAI-compatible chat completion endpoints.
//!
//! Request body: `{"model", "messages": [{"role", "content"}], "temperature", "n"}`.
//! The API key comes from [`EndpointConfig::api_key`] or, when unset, the
//! `ROSEVO_API_KEY` environment variable.

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const API_KEY_ENV: &str = "ROSEVO_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Full URL of the chat completions route.
    pub url: String,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    pub temperature: f64,
    /// Ask for all samples in one request via `n`; otherwise one request per
    /// sample.
    pub batch_completions: bool,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4-0314".into(),
            api_key: None,
            temperature: 1.0,
            batch_completions: true,
            max_attempts: 3,
            backoff_ms: 1000,
            timeout_secs: 300,
        }
    }
}

impl EndpointConfig {
    pub fn resolve_api_key(&self) -> Option<String> {
        self.api_key
            .clone()
            .filter(|k| !k.trim().is_empty())
            .or_else(|| std::env::var(API_KEY_ENV).ok().filter(|k| !k.trim().is_empty()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    #[error("no API key: set `api_key` in the endpoint config or {API_KEY_ENV}")]
    MissingApiKey,
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub messages: &'a [ChatMessage],
    pub temperature: f64,
    pub n: usize,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    index: Option<u32>,
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Retry(String),
    Fatal(ChatError),
}

pub struct ChatClient {
    config: EndpointConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, ChatError> {
        let api_key = config.resolve_api_key().ok_or(ChatError::MissingApiKey)?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            agent,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Request `n` completions. Transport failures, 429 and 5xx responses are
    /// retried with exponential backoff up to `max_attempts`; choices are
    /// returned in index order.
    pub fn complete(&self, messages: &[ChatMessage], n: usize) -> Result<Vec<String>, ChatError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
            n,
        };
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.send_once(&body) {
                Ok(texts) => return Ok(texts),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    tracing::warn!(attempt = attempt + 1, %message, "chat request failed");
                    last = message;
                }
            }
        }
        Err(ChatError::Transport {
            attempts,
            message: last,
        })
    }

    fn send_once(&self, body: &ChatRequest<'_>) -> Result<Vec<String>, Attempt> {
        let mut response = self
            .agent
            .post(&self.config.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(ChatError::Status { status, body: text }));
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(ChatError::Decode(e.to_string())))?;
        let mut choices: Vec<(u32, String)> = parsed
            .choices
            .into_iter()
            .enumerate()
            .map(|(i, c)| (c.index.unwrap_or(i as u32), c.message.content.unwrap_or_default()))
            .collect();
        choices.sort_by_key(|(i, _)| *i);
        Ok(choices.into_iter().map(|(_, c)| c).collect())
    }
}

/// Bodies of all fenced code blocks (```` ``` ```` or ```` ```python ````).
/// An unterminated fence yields nothing.
pub fn extract_code_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(lines), true) => {
                blocks.push(lines.join("\n"));
                current = None;
            }
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_fenced_blocks() {
        let text = "Here you go:\n```python\ndef f(a):\n    return a\n```\ntrailing\n```\nx = 1\n```";
        assert_eq!(
            extract_code_blocks(text),
            vec!["def f(a):\n    return a".to_string(), "x = 1".to_string()]
        );
        assert!(extract_code_blocks("no code").is_empty());
        assert!(extract_code_blocks("```\nunterminated").is_empty());
    }

    #[test]
    fn request_wire_format() {
        let msgs = vec![ChatMessage::system("s"), ChatMessage::user("u")];
        let body = ChatRequest {
            model: "m",
            messages: &msgs,
            temperature: 1.0,
            n: 16,
        };
        let json = serde_json::to_value(&body).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "model": "m",
                "messages": [{"role": "system", "content": "s"}, {"role": "user", "content": "u"}],
                "temperature": 1.0,
                "n": 16
            })
        );
    }

    #[test]
    fn missing_key_is_reported_before_any_request() {
        let config = EndpointConfig {
            api_key: Some("  ".into()),
            ..EndpointConfig::default()
        };
        if std::env::var(API_KEY_ENV).is_err() {
            assert!(matches!(ChatClient::new(config), Err(ChatError::MissingApiKey)));
        }
    }
}
