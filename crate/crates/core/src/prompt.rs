//! f-string template rendering and prompt assembly.
//!
//! Templates reference variables as `{name}`; literal braces are escaped as
//! `{{` and `}}`. A prompt is assembled from an agent's template messages in
//! declared order, with the placeholder message expanding into the
//! memory-filtered conversation history.

use crate::agent::{is_identifier, AgentDefinition, TemplateRole};
use crate::transcript::{apply_memory_policy, MemoryPolicy, Transcript};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Variable name → value map supplied to a render.
pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

impl MessageRole {
    pub fn wire_name(&self) -> &'static str {
        match self {
            MessageRole::System => "system",
            MessageRole::User => "user",
            MessageRole::Assistant => "assistant",
        }
    }
}

/// A fully rendered, wire-ready chat message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedMessage {
    pub role: MessageRole,
    pub content: String,
}

impl RenderedMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: MessageRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: MessageRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: MessageRole::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TemplateError {
    /// Any brace sequence that is neither an escape nor a `{identifier}`
    /// field. Position is the byte offset of the offending brace.
    #[error("unbalanced brace at byte {position}")]
    UnbalancedBrace { position: usize },
    #[error("missing binding for {name:?}")]
    MissingBinding { name: String },
}

enum Piece<'a> {
    Literal(&'a str),
    OpenBrace,
    CloseBrace,
    Field(&'a str),
}

/// Single scanner shared by `extract_variables` and `render_template` so the
/// two can never disagree about the grammar.
fn scan(template: &str) -> Result<Vec<Piece<'_>>, TemplateError> {
    let bytes = template.as_bytes();
    let mut pieces = Vec::new();
    let mut lit_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' => {
                if lit_start < i {
                    pieces.push(Piece::Literal(&template[lit_start..i]));
                }
                if bytes.get(i + 1) == Some(&b'{') {
                    pieces.push(Piece::OpenBrace);
                    i += 2;
                } else {
                    let mut j = i + 1;
                    while j < bytes.len()
                        && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_')
                    {
                        j += 1;
                    }
                    let name = &template[i + 1..j];
                    if bytes.get(j) != Some(&b'}') || !is_identifier(name) {
                        return Err(TemplateError::UnbalancedBrace { position: i });
                    }
                    pieces.push(Piece::Field(name));
                    i = j + 1;
                }
                lit_start = i;
            }
            b'}' => {
                if lit_start < i {
                    pieces.push(Piece::Literal(&template[lit_start..i]));
                }
                if bytes.get(i + 1) == Some(&b'}') {
                    pieces.push(Piece::CloseBrace);
                    i += 2;
                } else {
                    return Err(TemplateError::UnbalancedBrace { position: i });
                }
                lit_start = i;
            }
            _ => i += 1,
        }
    }
    if lit_start < bytes.len() {
        pieces.push(Piece::Literal(&template[lit_start..]));
    }
    Ok(pieces)
}

/// Every `{name}` reference in the template. Escaped braces are excluded.
pub fn extract_variables(template: &str) -> Result<BTreeSet<String>, TemplateError> {
    let mut vars = BTreeSet::new();
    for piece in scan(template)? {
        if let Piece::Field(name) = piece {
            vars.insert(name.to_string());
        }
    }
    Ok(vars)
}

/// Substitute every `{name}` with its binding, unescape `{{` and `}}`, and
/// preserve everything else byte for byte.
pub fn render_template(template: &str, bindings: &Bindings) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    for piece in scan(template)? {
        match piece {
            Piece::Literal(s) => out.push_str(s),
            Piece::OpenBrace => out.push('{'),
            Piece::CloseBrace => out.push('}'),
            Piece::Field(name) => match bindings.get(name) {
                Some(value) => out.push_str(value),
                None => return Err(TemplateError::MissingBinding { name: name.to_string() }),
            },
        }
    }
    Ok(out)
}

/// Rendered prompt plus non-fatal advisories about supplied-but-undeclared
/// bindings.
#[derive(Debug, Clone)]
pub struct BuiltPrompt {
    pub messages: Vec<RenderedMessage>,
    pub warnings: Vec<String>,
}

/// Assemble the full message list for one model call.
///
/// Template messages render in declared order. A placeholder message expands
/// to the memory-filtered history, one `User` message per historical turn
/// formatted `"SpeakerName: content"`, followed by the bound value of the
/// placeholder variable when present in the bindings.
pub fn build_prompt(
    def: &AgentDefinition,
    bindings: &Bindings,
    history: &Transcript,
    memory: &MemoryPolicy,
) -> Result<BuiltPrompt, TemplateError> {
    let mut warnings = Vec::new();
    for key in bindings.keys() {
        if !def.prompt.input_variables.contains(key) {
            warnings.push(format!("binding {key:?} is not a declared input variable; ignored"));
        }
    }

    let mut messages = Vec::new();
    for tm in &def.prompt.template_messages {
        match tm.role {
            TemplateRole::System => {
                messages.push(RenderedMessage::system(render_template(&tm.content, bindings)?));
            }
            TemplateRole::User => {
                messages.push(RenderedMessage::user(render_template(&tm.content, bindings)?));
            }
            TemplateRole::Placeholder => {
                for msg in apply_memory_policy(memory, history) {
                    messages.push(RenderedMessage::user(format!(
                        "{}: {}",
                        msg.agent_name, msg.content
                    )));
                }
                if let Some(value) = bindings.get(&tm.content) {
                    messages.push(RenderedMessage::user(value.clone()));
                }
            }
        }
    }
    Ok(BuiltPrompt { messages, warnings })
}
