//! Chat-completion backends.
//!
//! One trait, three implementations: a remote OpenAI-compatible HTTP client,
//! a deterministic scripted fake, and a replay backend serving recorded
//! fixtures. A recording wrapper turns any live backend into fixture source
//! material for later replay.

mod http;
mod replay;
mod scripted;

pub use http::HttpBackend;
pub use replay::{record, ReplayBackend, RecordingBackend};
pub use scripted::{load_script, parse_script, Script, ScriptEntry, ScriptedBackend};

use crate::agent::SamplingParams;
use crate::canonical::{sha256_hex, to_canonical_string};
use crate::prompt::RenderedMessage;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model_name: String,
    pub messages: Vec<RenderedMessage>,
    pub sampling: SamplingParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    ToolDirective,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    #[serde(default)]
    pub token_usage: TokenUsage,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("http {status}: {snippet}")]
    Http { status: u16, snippet: String },
    #[error("fixture missing: {key}")]
    FixtureMissing { key: String },
    #[error("script exhausted for agent {agent:?} at turn {turn}")]
    ScriptExhausted { agent: String, turn: usize },
    #[error("timeout after {ms} ms")]
    Timeout { ms: u64 },
    #[error("io error at {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("transport error: {0}")]
    Transport(String),
}

impl BackendError {
    /// Stable event code used in execution logs.
    pub fn code(&self) -> &'static str {
        match self {
            BackendError::Http { .. } => "backend.http",
            BackendError::FixtureMissing { .. } => "backend.fixture_missing",
            BackendError::ScriptExhausted { .. } => "backend.script_exhausted",
            BackendError::Timeout { .. } => "backend.timeout",
            BackendError::Io { .. } => "backend.io",
            BackendError::Transport(_) => "backend.transport",
        }
    }
}

/// Uniform completion surface. The `agent_name` tag exists for the scripted
/// backend, which keys replies by (agent, per-agent turn counter); the other
/// backends ignore it.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, agent_name: &str, request: &ChatRequest) -> Result<ChatResponse, BackendError>;

    /// Secret-free description embedded in config snapshots.
    fn descriptor(&self) -> serde_json::Value;
}

/// Backend configuration as it appears in config files and CLI flags.
#[derive(Debug, Clone)]
pub enum BackendKind {
    RemoteHttp { endpoint: String, token_env: String },
    Scripted { script: Script },
    Replay { fixture_dir: PathBuf },
}

impl BackendKind {
    pub fn build(&self) -> Box<dyn ChatBackend> {
        match self {
            BackendKind::RemoteHttp { endpoint, token_env } => {
                Box::new(HttpBackend::new(endpoint, token_env))
            }
            BackendKind::Scripted { script } => Box::new(ScriptedBackend::new(script.clone())),
            BackendKind::Replay { fixture_dir } => {
                Box::new(ReplayBackend::new(fixture_dir.clone()))
            }
        }
    }
}

/// Stable content-addressed key for a request: the SHA-256 of the canonical
/// serialization of (model_name, messages, sampling), hex-encoded.
pub fn fixture_key(request: &ChatRequest) -> String {
    let value = serde_json::to_value(request).expect("request serializes");
    sha256_hex(to_canonical_string(&value).as_bytes())
}
