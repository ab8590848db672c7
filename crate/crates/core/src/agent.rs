//! Agent definition files: parsing, validation, and canonical serialization.
//!
//! An agent is described by a single UTF-8 JSON document (`.agent.json`) with
//! the top-level keys `agent_name`, `role_category`, `prompt`, `llm`, `tools`,
//! `return_values`, and `agent_type`. Unknown top-level keys are preserved for
//! round-tripping and surfaced as warnings.

use crate::canonical::to_canonical_document;
use crate::prompt::extract_variables;
use crate::schema::{
    as_object, opt_string_list, parse_json, require, require_array, require_f64, require_str,
    string_list, SchemaError,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};

pub const TEMPERATURE_RANGE: (f64, f64) = (0.0, 1.0);
pub const PENALTY_RANGE: (f64, f64) = (-2.0, 2.0);

/// Coarse organizational category an agent belongs to. Pure metadata: the
/// engine never branches on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleCategory {
    Manager,
    Executor,
    QualityChecker,
    MethodologyReviewer,
}

impl RoleCategory {
    fn from_str(s: &str) -> Option<Self> {
        match s {
            "manager" => Some(Self::Manager),
            "executor" => Some(Self::Executor),
            "quality_checker" => Some(Self::QualityChecker),
            "methodology_reviewer" => Some(Self::MethodologyReviewer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentType {
    DialogueAgent,
    DialogueAgentWithTools,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemplateFormat {
    #[serde(rename = "f-string")]
    FString,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateRole {
    System,
    User,
    Placeholder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateMessage {
    pub role: TemplateRole,
    /// For `Placeholder` messages the content is the bare variable name that
    /// the conversation history is injected through (e.g. `instruction`).
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    /// Declared variable set. Stored sorted so logically equal sets
    /// canonicalize to identical bytes.
    pub input_variables: BTreeSet<String>,
    pub template_messages: Vec<TemplateMessage>,
    pub template_format: TemplateFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: Option<u64>,
    #[serde(default)]
    pub presence_penalty: f64,
    #[serde(default)]
    pub frequency_penalty: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolGrants {
    pub allowed_basic_tools: Vec<String>,
    pub allowed_external_tools: Vec<String>,
}

impl ToolGrants {
    pub fn is_empty(&self) -> bool {
        self.allowed_basic_tools.is_empty() && self.allowed_external_tools.is_empty()
    }

    pub fn grants(&self, name: &str) -> bool {
        self.allowed_basic_tools.iter().any(|t| t == name)
            || self.allowed_external_tools.iter().any(|t| t == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDefinition {
    pub agent_name: String,
    pub role_category: RoleCategory,
    pub prompt: PromptTemplate,
    pub llm: SamplingParams,
    pub tools: ToolGrants,
    pub return_values: Vec<String>,
    pub agent_type: AgentType,
    /// Unknown top-level keys, kept so canonicalization is lossless.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// Parse result: the definition plus non-fatal advisories (unknown keys,
/// tool-typing oddities).
#[derive(Debug, Clone)]
pub struct ParsedAgent {
    pub definition: AgentDefinition,
    pub warnings: Vec<String>,
}

const KNOWN_KEYS: [&str; 7] = [
    "agent_name",
    "role_category",
    "prompt",
    "llm",
    "tools",
    "return_values",
    "agent_type",
];

pub fn parse_agent_definition(raw: &str) -> Result<ParsedAgent, SchemaError> {
    let value = parse_json(raw)?;
    let obj = as_object(&value, "")?;
    let mut warnings = Vec::new();

    let agent_name = require_str(obj, "", "agent_name")?;

    let role_category = match obj.get("role_category") {
        None | Some(Value::Null) => RoleCategory::Executor,
        Some(v) => {
            let s = v.as_str().ok_or(SchemaError::WrongType {
                path: "role_category".into(),
                expected: "string",
            })?;
            RoleCategory::from_str(s).ok_or_else(|| SchemaError::BadEnumValue {
                path: "role_category".into(),
                got: s.to_string(),
            })?
        }
    };

    let prompt = parse_prompt(require(obj, "", "prompt")?)?;
    let llm = parse_sampling(require(obj, "", "llm")?)?;

    let tools_value = require(obj, "", "tools")?;
    let tools_obj = as_object(tools_value, "tools")?;
    let tools = ToolGrants {
        allowed_basic_tools: opt_string_list(tools_obj, "tools", "allowed_basic_tools")?,
        allowed_external_tools: opt_string_list(tools_obj, "tools", "allowed_external_tools")?,
    };

    let return_values = string_list(require(obj, "", "return_values")?, "return_values")?;

    let agent_type_str = require_str(obj, "", "agent_type")?;
    let agent_type = match agent_type_str.as_str() {
        "dialogue_agent" => AgentType::DialogueAgent,
        "dialogue_agent_with_tools" => AgentType::DialogueAgentWithTools,
        other => {
            return Err(SchemaError::BadEnumValue {
                path: "agent_type".into(),
                got: other.to_string(),
            })
        }
    };

    let mut extra = BTreeMap::new();
    for (key, val) in obj {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            warnings.push(format!("unknown top-level key {key:?} preserved"));
            extra.insert(key.clone(), val.clone());
        }
    }

    if agent_type == AgentType::DialogueAgentWithTools && tools.is_empty() {
        warnings.push(
            "agent_type is dialogue_agent_with_tools but no tools are granted".to_string(),
        );
    }

    Ok(ParsedAgent {
        definition: AgentDefinition {
            agent_name,
            role_category,
            prompt,
            llm,
            tools,
            return_values,
            agent_type,
            extra,
        },
        warnings,
    })
}

fn parse_prompt(value: &Value) -> Result<PromptTemplate, SchemaError> {
    let obj = as_object(value, "prompt")?;
    let vars = string_list(require(obj, "prompt", "input_variables")?, "prompt.input_variables")?;
    let messages = require_array(obj, "prompt", "template_messages")?;
    let mut template_messages = Vec::with_capacity(messages.len());
    for (i, msg) in messages.iter().enumerate() {
        let path = format!("prompt.template_messages[{i}]");
        let mobj = as_object(msg, &path)?;
        let role_str = require_str(mobj, &path, "role")?;
        let role = match role_str.as_str() {
            "system" => TemplateRole::System,
            "user" => TemplateRole::User,
            "placeholder" => TemplateRole::Placeholder,
            other => {
                return Err(SchemaError::BadEnumValue {
                    path: format!("{path}.role"),
                    got: other.to_string(),
                })
            }
        };
        let content = require_str(mobj, &path, "content")?;
        template_messages.push(TemplateMessage { role, content });
    }
    let format_str = require_str(obj, "prompt", "template_format")?;
    if format_str != "f-string" {
        return Err(SchemaError::BadEnumValue {
            path: "prompt.template_format".into(),
            got: format_str,
        });
    }
    Ok(PromptTemplate {
        input_variables: vars.into_iter().collect(),
        template_messages,
        template_format: TemplateFormat::FString,
    })
}

fn parse_sampling(value: &Value) -> Result<SamplingParams, SchemaError> {
    let obj = as_object(value, "llm")?;
    let model_name = require_str(obj, "llm", "model_name")?;
    let temperature = require_f64(obj, "llm", "temperature")?;
    let max_tokens = match obj.get("max_tokens") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or(SchemaError::WrongType {
            path: "llm.max_tokens".into(),
            expected: "positive integer or null",
        })?),
    };
    let opt_penalty = |key: &'static str| -> Result<f64, SchemaError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(0.0),
            Some(v) => v.as_f64().ok_or(SchemaError::WrongType {
                path: format!("llm.{key}"),
                expected: "number",
            }),
        }
    };
    Ok(SamplingParams {
        model_name,
        temperature,
        max_tokens,
        presence_penalty: opt_penalty("presence_penalty")?,
        frequency_penalty: opt_penalty("frequency_penalty")?,
    })
}

/// One violated invariant, anchored to a document path. Violations are data,
/// not failures: validation itself never errors.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyField { path: String },
    RangeViolation { path: String, value: f64, min: f64, max: f64 },
    NotPositive { path: String },
    InvalidIdentifier { path: String, name: String },
    UndeclaredVariable { path: String, name: String },
    PlaceholderNotBare { path: String, content: String },
    NoSystemMessage { path: String },
    DuplicateTool { path: String, name: String },
    AgentTypeMismatch { path: String, detail: String },
    TemplateSyntax { path: String, detail: String },
}

impl Violation {
    pub fn path(&self) -> &str {
        match self {
            Violation::EmptyField { path }
            | Violation::RangeViolation { path, .. }
            | Violation::NotPositive { path }
            | Violation::InvalidIdentifier { path, .. }
            | Violation::UndeclaredVariable { path, .. }
            | Violation::PlaceholderNotBare { path, .. }
            | Violation::NoSystemMessage { path }
            | Violation::DuplicateTool { path, .. }
            | Violation::AgentTypeMismatch { path, .. }
            | Violation::TemplateSyntax { path, .. } => path,
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EmptyField { path } => write!(f, "{path}: must not be empty"),
            Violation::RangeViolation { path, value, min, max } => {
                write!(f, "{path}: {value} outside [{min}, {max}]")
            }
            Violation::NotPositive { path } => write!(f, "{path}: must be a positive integer"),
            Violation::InvalidIdentifier { path, name } => {
                write!(f, "{path}: {name:?} is not a valid identifier")
            }
            Violation::UndeclaredVariable { path, name } => {
                write!(f, "{path}: references undeclared variable {name:?}")
            }
            Violation::PlaceholderNotBare { path, content } => {
                write!(f, "{path}: placeholder content {content:?} is not a bare identifier")
            }
            Violation::NoSystemMessage { path } => {
                write!(f, "{path}: at least one system message is required")
            }
            Violation::DuplicateTool { path, name } => {
                write!(f, "{path}: tool {name:?} granted more than once")
            }
            Violation::AgentTypeMismatch { path, detail } => write!(f, "{path}: {detail}"),
            Violation::TemplateSyntax { path, detail } => write!(f, "{path}: {detail}"),
        }
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Check every invariant of a structurally complete definition. Violations
/// come back in document order and each violated invariant appears once.
pub fn validate_agent_definition(def: &AgentDefinition) -> Vec<Violation> {
    let mut out = Vec::new();

    if def.agent_name.trim().is_empty() {
        out.push(Violation::EmptyField { path: "agent_name".into() });
    }

    for var in &def.prompt.input_variables {
        if !is_identifier(var) {
            out.push(Violation::InvalidIdentifier {
                path: "prompt.input_variables".into(),
                name: var.clone(),
            });
        }
    }

    let mut saw_system = false;
    for (i, msg) in def.prompt.template_messages.iter().enumerate() {
        let path = format!("prompt.template_messages[{i}]");
        match msg.role {
            TemplateRole::Placeholder => {
                if !is_identifier(&msg.content) {
                    out.push(Violation::PlaceholderNotBare {
                        path,
                        content: msg.content.clone(),
                    });
                } else if !def.prompt.input_variables.contains(&msg.content) {
                    out.push(Violation::UndeclaredVariable { path, name: msg.content.clone() });
                }
            }
            TemplateRole::System | TemplateRole::User => {
                if msg.role == TemplateRole::System {
                    saw_system = true;
                }
                match extract_variables(&msg.content) {
                    Ok(vars) => {
                        for name in vars {
                            if !def.prompt.input_variables.contains(&name) {
                                out.push(Violation::UndeclaredVariable {
                                    path: path.clone(),
                                    name,
                                });
                            }
                        }
                    }
                    Err(e) => out.push(Violation::TemplateSyntax { path, detail: e.to_string() }),
                }
            }
        }
    }
    if !saw_system {
        out.push(Violation::NoSystemMessage { path: "prompt.template_messages".into() });
    }

    let (tmin, tmax) = TEMPERATURE_RANGE;
    if !(tmin..=tmax).contains(&def.llm.temperature) {
        out.push(Violation::RangeViolation {
            path: "llm.temperature".into(),
            value: def.llm.temperature,
            min: tmin,
            max: tmax,
        });
    }
    if def.llm.max_tokens == Some(0) {
        out.push(Violation::NotPositive { path: "llm.max_tokens".into() });
    }
    let (pmin, pmax) = PENALTY_RANGE;
    for (key, value) in [
        ("presence_penalty", def.llm.presence_penalty),
        ("frequency_penalty", def.llm.frequency_penalty),
    ] {
        if !(pmin..=pmax).contains(&value) {
            out.push(Violation::RangeViolation {
                path: format!("llm.{key}"),
                value,
                min: pmin,
                max: pmax,
            });
        }
    }

    let mut seen = BTreeSet::new();
    for name in def
        .tools
        .allowed_basic_tools
        .iter()
        .chain(def.tools.allowed_external_tools.iter())
    {
        if !seen.insert(name.clone()) {
            out.push(Violation::DuplicateTool { path: "tools".into(), name: name.clone() });
        }
    }

    if def.return_values.is_empty() {
        out.push(Violation::EmptyField { path: "return_values".into() });
    }

    let has_external = !def.tools.allowed_external_tools.is_empty();
    let has_basic = !def.tools.allowed_basic_tools.is_empty();
    match def.agent_type {
        AgentType::DialogueAgent if has_external => out.push(Violation::AgentTypeMismatch {
            path: "agent_type".into(),
            detail: "external tools are granted but agent_type is dialogue_agent".into(),
        }),
        AgentType::DialogueAgentWithTools if !has_external && has_basic => {
            out.push(Violation::AgentTypeMismatch {
                path: "agent_type".into(),
                detail: "only basic tools are granted; agent_type should be dialogue_agent".into(),
            })
        }
        _ => {}
    }

    out
}

/// Canonical JSON for a definition: sorted keys, shortest round-trip numeric
/// form, trailing newline. `parse(canonicalize(x))` equals `x` structurally.
pub fn canonicalize(def: &AgentDefinition) -> String {
    let value = serde_json::to_value(def).expect("definition serializes");
    to_canonical_document(&value)
}

pub fn load_agent_definition(path: &std::path::Path) -> Result<ParsedAgent, SchemaError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| SchemaError::Invalid { path: path.display().to_string(), detail: e.to_string() })?;
    parse_agent_definition(&raw)
}
