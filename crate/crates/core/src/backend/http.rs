//! OpenAI-compatible chat-completions client.
//!
//! Wire contract: `POST {endpoint}/chat/completions` with a JSON body holding
//! exactly `model`, `messages[{role,content}]`, `temperature`, `max_tokens`
//! (omitted when absent), `presence_penalty`, and `frequency_penalty`.
//! Bearer auth comes from the environment variable named in the config; the
//! token value never reaches snapshots or logs.

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, FinishReason, TokenUsage};
use serde_json::{json, Value};
use std::time::Duration;

pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;
const RETRY_BACKOFF_MS: u64 = 1_000;
const SNIPPET_LEN: usize = 200;

pub struct HttpBackend {
    endpoint: String,
    token_env: String,
    timeout_ms: u64,
}

impl HttpBackend {
    pub fn new(endpoint: &str, token_env: &str) -> Self {
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            token_env: token_env.to_string(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn with_timeout_ms(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    fn request_body(request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| json!({ "role": m.role.wire_name(), "content": m.content }))
            .collect();
        let mut body = serde_json::Map::new();
        body.insert("model".into(), request.model_name.clone().into());
        body.insert("messages".into(), Value::Array(messages));
        body.insert("temperature".into(), json!(request.sampling.temperature));
        if let Some(max_tokens) = request.sampling.max_tokens {
            body.insert("max_tokens".into(), json!(max_tokens));
        }
        body.insert("presence_penalty".into(), json!(request.sampling.presence_penalty));
        body.insert("frequency_penalty".into(), json!(request.sampling.frequency_penalty));
        Value::Object(body)
    }

    fn send_once(&self, body: &Value) -> Result<(u16, String), BackendError> {
        let url = format!("{}/chat/completions", self.endpoint);
        let mut builder = ureq::post(&url)
            .config()
            .timeout_global(Some(Duration::from_millis(self.timeout_ms)))
            .http_status_as_error(false)
            .build();
        if let Ok(token) = std::env::var(&self.token_env) {
            if !token.is_empty() {
                builder = builder.header("authorization", &format!("Bearer {token}"));
            }
        }
        match builder.send_json(body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| BackendError::Transport(e.to_string()))?;
                Ok((status, text))
            }
            Err(ureq::Error::Timeout(_)) => Err(BackendError::Timeout { ms: self.timeout_ms }),
            Err(e) => Err(BackendError::Transport(e.to_string())),
        }
    }

    fn parse_response(status: u16, text: &str) -> Result<ChatResponse, BackendError> {
        let snippet = |t: &str| t.chars().take(SNIPPET_LEN).collect::<String>();
        if !(200..300).contains(&status) {
            return Err(BackendError::Http { status, snippet: snippet(text) });
        }
        let value: Value = serde_json::from_str(text)
            .map_err(|_| BackendError::Http { status, snippet: snippet(text) })?;
        let choice = value
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| BackendError::Http { status, snippet: snippet(text) })?;
        let content = choice
            .get("message")
            .and_then(|m| m.get("content"))
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Http { status, snippet: snippet(text) })?;
        let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
            Some("length") => FinishReason::Length,
            _ => FinishReason::Stop,
        };
        let usage = value.get("usage");
        let token_usage = TokenUsage {
            prompt: usage
                .and_then(|u| u.get("prompt_tokens"))
                .and_then(Value::as_u64)
                .unwrap_or(0),
            completion: usage
                .and_then(|u| u.get("completion_tokens"))
                .and_then(Value::as_u64)
                .unwrap_or(0),
        };
        Ok(ChatResponse { text: content.to_string(), finish_reason, token_usage })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, _agent_name: &str, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = Self::request_body(request);
        let (status, text) = match self.send_once(&body) {
            // One retry on 5xx after a short backoff; unattended batches must
            // not wedge on a transient upstream failure.
            Ok((status, _)) if (500..600).contains(&status) => {
                std::thread::sleep(Duration::from_millis(RETRY_BACKOFF_MS));
                self.send_once(&body)?
            }
            other => other?,
        };
        Self::parse_response(status, &text)
    }

    fn descriptor(&self) -> serde_json::Value {
        json!({ "kind": "remote_http", "endpoint": self.endpoint, "token_env": self.token_env })
    }
}
