//! The conversation record: ordered, timestamped, agent-attributed messages.

use crate::tools::{ToolCallDirective, ToolResult};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ToolTraceEntry {
    pub directive: ToolCallDirective,
    pub result: ToolResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    /// 0-based turn number, contiguous within a transcript.
    pub index: usize,
    pub agent_name: String,
    pub content: String,
    pub timestamp: DateTime<Utc>,
    pub tool_trace: Vec<ToolTraceEntry>,
}

impl Message {
    pub fn new(index: usize, agent_name: &str, content: &str, timestamp: DateTime<Utc>) -> Self {
        Self {
            index,
            agent_name: agent_name.to_string(),
            content: content.to_string(),
            timestamp,
            tool_trace: Vec::new(),
        }
    }
}

/// Append-only ordered message list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    messages: Vec<Message>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_messages(messages: Vec<Message>) -> Self {
        debug_assert!(messages.iter().enumerate().all(|(i, m)| m.index == i));
        Self { messages }
    }

    /// Panics if the message index is not the next contiguous index.
    pub fn push(&mut self, message: Message) {
        assert_eq!(message.index, self.messages.len(), "indices must be contiguous from 0");
        self.messages.push(message);
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn last(&self) -> Option<&Message> {
        self.messages.last()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Message> {
        self.messages.iter()
    }

    pub fn as_slice(&self) -> &[Message] {
        &self.messages
    }
}

/// How much prior transcript an agent's prompt includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryPolicy {
    Full,
    LastK { k: usize },
}

/// Full policy yields the whole transcript; LastK the trailing window.
pub fn apply_memory_policy<'a>(policy: &MemoryPolicy, transcript: &'a Transcript) -> &'a [Message] {
    let messages = transcript.as_slice();
    match policy {
        MemoryPolicy::Full => messages,
        MemoryPolicy::LastK { k } => {
            let start = messages.len().saturating_sub(*k);
            &messages[start..]
        }
    }
}
