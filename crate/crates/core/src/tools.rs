//! Tool registry and directive parsing.
//!
//! Tool calls are textual so every backend, including the scripted one,
//! exercises the same path: a model reply requests a tool with a fenced
//! directive block `<<tool:NAME {"arg": "value"}>>`. Grants are enforced
//! before any handler runs.

use crate::agent::ToolGrants;
use crate::schema::{as_object, parse_json, SchemaError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    Basic,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallDirective {
    pub tool_name: String,
    pub args: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub ok: bool,
    pub content: String,
}

pub type ToolHandler = Box<dyn Fn(&BTreeMap<String, String>) -> ToolResult + Send + Sync>;

pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub kind: ToolKind,
    handler: ToolHandler,
}

impl ToolSpec {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        kind: ToolKind,
        handler: ToolHandler,
    ) -> Self {
        Self { name: name.into(), description: description.into(), kind, handler }
    }
}

impl std::fmt::Debug for ToolSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .finish()
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ToolError {
    #[error("malformed tool directive near {snippet:?}")]
    MalformedDirective { snippet: String },
    #[error("tool {name:?} is not granted to this agent")]
    ToolNotGranted { name: String },
    #[error("tool {name:?} is not registered")]
    ToolUnknown { name: String },
    #[error("tool {name:?} already registered")]
    DuplicateTool { name: String },
}

/// Immutable after build; handlers must tolerate concurrent invocation.
#[derive(Debug, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, ToolSpec>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<(), ToolError> {
        if self.tools.contains_key(&spec.name) {
            return Err(ToolError::DuplicateTool { name: spec.name });
        }
        self.tools.insert(spec.name.clone(), spec);
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    /// Registry with the deterministic stub search tool installed.
    pub fn with_stub_search(corpus: BTreeMap<String, String>) -> Self {
        let mut registry = Self::new();
        registry.register(stub_search_tool(corpus)).expect("fresh registry");
        registry
    }
}

const DIRECTIVE_OPEN: &str = "<<tool:";

/// First well-formed directive block in the text, if any. A block that starts
/// like a directive but does not parse is an error, not a miss.
pub fn parse_tool_directive(text: &str) -> Result<Option<ToolCallDirective>, ToolError> {
    let Some(start) = text.find(DIRECTIVE_OPEN) else {
        return Ok(None);
    };
    let snippet = || {
        let tail = &text[start..];
        tail.chars().take(48).collect::<String>()
    };

    let rest = &text[start + DIRECTIVE_OPEN.len()..];
    let name_len = rest
        .bytes()
        .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_' || *b == b'-')
        .count();
    if name_len == 0 {
        return Err(ToolError::MalformedDirective { snippet: snippet() });
    }
    let tool_name = rest[..name_len].to_string();
    let after_name = rest[name_len..].trim_start();
    if !after_name.starts_with('{') {
        return Err(ToolError::MalformedDirective { snippet: snippet() });
    }

    // Parse exactly one JSON value so braces inside string args are handled.
    let mut stream = serde_json::Deserializer::from_str(after_name).into_iter::<serde_json::Value>();
    let value = match stream.next() {
        Some(Ok(v)) => v,
        _ => return Err(ToolError::MalformedDirective { snippet: snippet() }),
    };
    let consumed = stream.byte_offset();
    if !after_name[consumed..].trim_start().starts_with(">>") {
        return Err(ToolError::MalformedDirective { snippet: snippet() });
    }

    let obj = match value.as_object() {
        Some(o) => o,
        None => return Err(ToolError::MalformedDirective { snippet: snippet() }),
    };
    let mut args = BTreeMap::new();
    for (k, v) in obj {
        match v.as_str() {
            Some(s) => {
                args.insert(k.clone(), s.to_string());
            }
            None => return Err(ToolError::MalformedDirective { snippet: snippet() }),
        }
    }
    Ok(Some(ToolCallDirective { tool_name, args }))
}

/// Execute a directive's handler. The handler runs only when the tool is both
/// granted to the calling agent and registered; handler-level failures are
/// reported inside the `ToolResult`, not as errors.
pub fn invoke_tool(
    registry: &ToolRegistry,
    grants: &ToolGrants,
    directive: &ToolCallDirective,
) -> Result<ToolResult, ToolError> {
    if !grants.grants(&directive.tool_name) {
        return Err(ToolError::ToolNotGranted { name: directive.tool_name.clone() });
    }
    let spec = registry
        .tools
        .get(&directive.tool_name)
        .ok_or_else(|| ToolError::ToolUnknown { name: directive.tool_name.clone() })?;
    Ok((spec.handler)(&directive.args))
}

/// Deterministic stand-in for a web search tool: a pure function of its args.
/// Queries found in the corpus return the canned result; everything else gets
/// `RESULT[query]`.
pub fn stub_search_tool(corpus: BTreeMap<String, String>) -> ToolSpec {
    ToolSpec::new(
        "search",
        "Deterministic stub web search",
        ToolKind::External,
        Box::new(move |args| {
            let query = args.get("q").cloned().unwrap_or_default();
            let content = corpus
                .get(&query)
                .cloned()
                .unwrap_or_else(|| format!("RESULT[{query}]"));
            ToolResult { ok: true, content }
        }),
    )
}

/// Stub corpus file: a JSON object mapping query strings to result strings.
pub fn load_stub_corpus(path: &std::path::Path) -> Result<BTreeMap<String, String>, SchemaError> {
    let raw = std::fs::read_to_string(path).map_err(|e| SchemaError::Invalid {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let value = parse_json(&raw)?;
    let obj = as_object(&value, "")?;
    let mut corpus = BTreeMap::new();
    for (k, v) in obj {
        let s = v.as_str().ok_or(SchemaError::WrongType {
            path: k.clone(),
            expected: "string",
        })?;
        corpus.insert(k.clone(), s.to_string());
    }
    Ok(corpus)
}
