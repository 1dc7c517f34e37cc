//! OpenAI-compatible chat-completions backends.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    parse_vqa_text, ClientError, CompletionRequest, LanguageModel, VisionModel, VqaAnswer,
    VqaRequest,
};
use crate::prompts;
use crate::world::WorldSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpConfig {
    pub api_base: String,
    pub api_key: String,
    pub model: String,
}

impl HttpConfig {
    pub const DEFAULT_BASE: &'static str = "https://api.openai.com/v1";

    /// Reads `<PREFIX>_API_BASE`, `<PREFIX>_API_KEY` and `<PREFIX>_MODEL`.
    pub fn from_env(prefix: &str, default_model: Option<&str>) -> Result<Self, ClientError> {
        Self::from_lookup(prefix, default_model, |k| std::env::var(k).ok())
    }

    pub fn from_lookup(
        prefix: &str,
        default_model: Option<&str>,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ClientError> {
        let get = |name: &str| lookup(&format!("{prefix}_{name}")).filter(|v| !v.trim().is_empty());
        let api_key = get("API_KEY").ok_or_else(|| {
            ClientError::Config(format!("environment variable {prefix}_API_KEY is not set"))
        })?;
        let model = get("MODEL")
            .or_else(|| default_model.map(str::to_string))
            .ok_or_else(|| {
                ClientError::Config(format!("environment variable {prefix}_MODEL is not set"))
            })?;
        Ok(HttpConfig {
            api_base: get("API_BASE").unwrap_or_else(|| Self::DEFAULT_BASE.to_string()),
            api_key,
            model,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.api_base.trim_end_matches('/'))
    }
}

/// Up to `max_retries` extra attempts on transport errors, 429 and 5xx,
/// sleeping `base_delay * 2^attempt` between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(250),
        }
    }
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<Value>,
    temperature: f32,
    max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

struct Transport {
    config: HttpConfig,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl Transport {
    fn new(config: HttpConfig, retry: RetryPolicy) -> Result<Self, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Transport {
            config,
            retry,
            client,
        })
    }

    fn chat(
        &self,
        messages: Vec<Value>,
        temperature: f32,
        max_tokens: u32,
    ) -> Result<String, ClientError> {
        let url = self.config.endpoint();
        let body = ChatRequest {
            model: &self.config.model,
            messages,
            temperature,
            max_tokens,
        };
        let mut attempt = 0;
        loop {
            attempt += 1;
            let retries_left = attempt <= self.retry.max_retries;
            let sent = self
                .client
                .post(&url)
                .bearer_auth(&self.config.api_key)
                .json(&body)
                .send();
            match sent {
                Err(e) if retries_left => log_retry(&e.to_string()),
                Err(e) => {
                    return Err(ClientError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    })
                }
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: ChatResponse = resp
                            .json()
                            .map_err(|e| ClientError::Malformed(e.to_string()))?;
                        return parsed
                            .choices
                            .into_iter()
                            .next()
                            .and_then(|c| c.message.content)
                            .ok_or_else(|| {
                                ClientError::Malformed("response has no message content".into())
                            });
                    }
                    let transient = status.is_server_error() || status.as_u16() == 429;
                    if !(transient && retries_left) {
                        return Err(ClientError::Status {
                            status: status.as_u16(),
                            url,
                            body: resp.text().unwrap_or_default(),
                        });
                    }
                    log_retry(&format!("HTTP {status}"));
                }
            }
            std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
        }
    }
}

fn log_retry(reason: &str) {
    if std::env::var_os("GROUNDWORK_QUIET").is_none() {
        eprintln!("warning: chat request failed ({reason}); retrying");
    }
}

pub struct HttpLlm {
    transport: Transport,
}

impl HttpLlm {
    pub fn new(config: HttpConfig, retry: RetryPolicy) -> Result<Self, ClientError> {
        Ok(HttpLlm {
            transport: Transport::new(config, retry)?,
        })
    }
}

impl LanguageModel for HttpLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let messages = vec![json!({"role": "user", "content": request.prompt})];
        self.transport
            .chat(messages, request.temperature, request.max_tokens)
    }

    fn name(&self) -> &str {
        "http"
    }
}

/// Sends the yes/no/unknown prompt with the photo attached and keeps the
/// first answer keyword in the reply. Chat endpoints expose no answer
/// likelihoods, so this does not rank the three options.
pub struct HttpVlm {
    transport: Transport,
}

impl HttpVlm {
    pub fn new(config: HttpConfig, retry: RetryPolicy) -> Result<Self, ClientError> {
        Ok(HttpVlm {
            transport: Transport::new(config, retry)?,
        })
    }
}

impl VisionModel for HttpVlm {
    fn answer(
        &self,
        request: &VqaRequest,
        world: Option<&WorldSpec>,
    ) -> Result<VqaAnswer, ClientError> {
        let prompt = prompts::Registry::builtin()
            .render_vqa(&request.question)
            .map_err(|e| ClientError::Precondition(e.to_string()))?;
        let path = world
            .and_then(|w| w.resolve_image(&request.image))
            .ok_or_else(|| {
                ClientError::Config(format!(
                    "no image file for {} from {}",
                    request.image.target, request.image.angle
                ))
            })?;
        let bytes = std::fs::read(&path).map_err(|e| {
            ClientError::Config(format!("cannot read image {}: {e}", path.display()))
        })?;
        let mime = match path.extension().and_then(|e| e.to_str()) {
            Some("png") => "image/png",
            Some("webp") => "image/webp",
            _ => "image/jpeg",
        };
        let data = base64::engine::general_purpose::STANDARD.encode(bytes);
        let messages = vec![json!({
            "role": "user",
            "content": [
                {"type": "text", "text": prompt.text},
                {"type": "image_url", "image_url": {"url": format!("data:{mime};base64,{data}")}}
            ]
        })];
        let reply = self.transport.chat(messages, 0.0, 5)?;
        parse_vqa_text(&reply)
            .ok_or_else(|| ClientError::Malformed(format!("no yes/no/unknown in `{reply}`")))
    }

    fn name(&self) -> &str {
        "http"
    }
}
