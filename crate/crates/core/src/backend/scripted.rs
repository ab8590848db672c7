//! Deterministic scripted backend: replays authored lines keyed by
//! (agent name, per-agent turn counter), with an optional regex guard on the
//! last incoming message. Each simulation run owns its own instance because
//! the turn counters are per-run state.

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, FinishReason, TokenUsage};
use crate::schema::{as_object, parse_json, require_str, SchemaError};
use regex::Regex;
use std::collections::BTreeMap;
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEntry {
    pub reply: String,
    /// When set, the entry only matches if this regex matches the content of
    /// the last message in the incoming request.
    pub guard: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Script {
    pub agents: BTreeMap<String, Vec<ScriptEntry>>,
}

impl Script {
    /// Guard-free script from plain reply lists; the common test shape.
    pub fn from_replies(agents: &[(&str, &[&str])]) -> Self {
        let mut map = BTreeMap::new();
        for (name, replies) in agents {
            map.insert(
                name.to_string(),
                replies
                    .iter()
                    .map(|r| ScriptEntry { reply: r.to_string(), guard: None })
                    .collect(),
            );
        }
        Self { agents: map }
    }
}

/// Script file format: `{"agents": {"Name": [{"reply": "...", "guard": "..."}]}}`.
pub fn load_script(path: &std::path::Path) -> Result<Script, SchemaError> {
    let raw = std::fs::read_to_string(path).map_err(|e| SchemaError::Invalid {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    parse_script(&raw)
}

pub fn parse_script(raw: &str) -> Result<Script, SchemaError> {
    let value = parse_json(raw)?;
    let obj = as_object(&value, "")?;
    let agents_value = obj
        .get("agents")
        .ok_or_else(|| SchemaError::MissingField("agents".into()))?;
    let agents_obj = as_object(agents_value, "agents")?;
    let mut agents = BTreeMap::new();
    for (name, entries_value) in agents_obj {
        let path = format!("agents.{name}");
        let arr = entries_value.as_array().ok_or(SchemaError::WrongType {
            path: path.clone(),
            expected: "array",
        })?;
        let mut entries = Vec::with_capacity(arr.len());
        for (i, entry) in arr.iter().enumerate() {
            let epath = format!("{path}[{i}]");
            let eobj = as_object(entry, &epath)?;
            let reply = require_str(eobj, &epath, "reply")?;
            let guard = match eobj.get("guard") {
                None | Some(serde_json::Value::Null) => None,
                Some(v) => Some(
                    v.as_str()
                        .ok_or(SchemaError::WrongType {
                            path: format!("{epath}.guard"),
                            expected: "string",
                        })?
                        .to_string(),
                ),
            };
            entries.push(ScriptEntry { reply, guard });
        }
        agents.insert(name.clone(), entries);
    }
    Ok(Script { agents })
}

struct CompiledEntry {
    reply: String,
    guard: Option<Regex>,
}

pub struct ScriptedBackend {
    agents: BTreeMap<String, Vec<CompiledEntry>>,
    counters: Mutex<BTreeMap<String, usize>>,
}

impl ScriptedBackend {
    /// Panics on an invalid guard regex; scripts are authored artifacts and a
    /// bad guard is a bug in them.
    pub fn new(script: Script) -> Self {
        let agents = script
            .agents
            .into_iter()
            .map(|(name, entries)| {
                let compiled = entries
                    .into_iter()
                    .map(|e| CompiledEntry {
                        reply: e.reply,
                        guard: e.guard.map(|g| {
                            Regex::new(&g).unwrap_or_else(|err| {
                                panic!("invalid guard regex for agent {name:?}: {err}")
                            })
                        }),
                    })
                    .collect();
                (name, compiled)
            })
            .collect();
        Self { agents, counters: Mutex::new(BTreeMap::new()) }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(
        &self,
        agent_name: &str,
        request: &ChatRequest,
    ) -> Result<ChatResponse, BackendError> {
        let mut counters = self.counters.lock().expect("counter lock");
        let turn = counters.get(agent_name).copied().unwrap_or(0);
        let exhausted = || BackendError::ScriptExhausted { agent: agent_name.to_string(), turn };

        let entries = self.agents.get(agent_name).ok_or_else(exhausted)?;
        let entry = entries.get(turn).ok_or_else(exhausted)?;
        if let Some(guard) = &entry.guard {
            let last = request.messages.last().map(|m| m.content.as_str()).unwrap_or("");
            if !guard.is_match(last) {
                return Err(exhausted());
            }
        }
        counters.insert(agent_name.to_string(), turn + 1);
        Ok(ChatResponse {
            text: entry.reply.clone(),
            finish_reason: FinishReason::Stop,
            token_usage: TokenUsage::default(),
        })
    }

    fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "scripted" })
    }
}
