//! Record/replay over content-addressed fixtures.
//!
//! Each fixture is one JSON file named `{key}.json` where the key is
//! `fixture_key(request)`. Recording is idempotent: re-recording the same
//! requests rewrites the same file set byte for byte.

use super::{fixture_key, BackendError, ChatBackend, ChatRequest, ChatResponse};
use crate::canonical::to_canonical_document;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize, Deserialize)]
struct FixtureFile {
    request_canonical: serde_json::Value,
    response: ChatResponse,
}

pub struct ReplayBackend {
    fixture_dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(fixture_dir: PathBuf) -> Self {
        Self { fixture_dir }
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, _agent_name: &str, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let key = fixture_key(request);
        let path = self.fixture_dir.join(format!("{key}.json"));
        let raw = match std::fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(BackendError::FixtureMissing { key })
            }
            Err(e) => {
                return Err(BackendError::Io { path: path.display().to_string(), detail: e.to_string() })
            }
        };
        let fixture: FixtureFile = serde_json::from_str(&raw).map_err(|e| BackendError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Ok(fixture.response)
    }

    fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "replay", "fixture_dir": self.fixture_dir.display().to_string() })
    }
}

/// Wraps any backend and persists every successful completion as a fixture.
pub struct RecordingBackend {
    inner: Box<dyn ChatBackend>,
    fixture_dir: PathBuf,
}

impl RecordingBackend {
    pub fn new(inner: Box<dyn ChatBackend>, fixture_dir: PathBuf) -> Self {
        Self { inner, fixture_dir }
    }
}

/// Record through `inner` into `fixture_dir`.
pub fn record(inner: Box<dyn ChatBackend>, fixture_dir: &Path) -> RecordingBackend {
    RecordingBackend::new(inner, fixture_dir.to_path_buf())
}

impl ChatBackend for RecordingBackend {
    fn complete(&self, agent_name: &str, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let response = self.inner.complete(agent_name, request)?;
        let key = fixture_key(request);
        let path = self.fixture_dir.join(format!("{key}.json"));
        let io_err = |e: std::io::Error| BackendError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        };
        std::fs::create_dir_all(&self.fixture_dir).map_err(io_err)?;
        let fixture = FixtureFile {
            request_canonical: serde_json::to_value(request).expect("request serializes"),
            response: response.clone(),
        };
        let value = serde_json::to_value(&fixture).expect("fixture serializes");
        std::fs::write(&path, to_canonical_document(&value)).map_err(io_err)?;
        Ok(response)
    }

    // A recorded run is reproduced by replaying its fixture dir, so its
    // snapshot carries the replay descriptor: record-then-replay yields
    // byte-identical snapshots.
    fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "replay", "fixture_dir": self.fixture_dir.display().to_string() })
    }
}
