//! Path-aware JSON field extraction shared by every config loader.
//!
//! All file formats in this crate (agent definitions, scenarios, experiment
//! matrices, backend scripts) are walked by hand so that errors carry the
//! exact document path that caused them instead of a serde trace.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing field: {0}")]
    MissingField(String),
    #[error("bad enum value at {path}: got {got:?}")]
    BadEnumValue { path: String, got: String },
    #[error("wrong type at {path}: expected {expected}")]
    WrongType { path: String, expected: &'static str },
    #[error("invalid value at {path}: {detail}")]
    Invalid { path: String, detail: String },
}

pub fn parse_json(raw: &str) -> Result<Value, SchemaError> {
    serde_json::from_str(raw).map_err(|e| SchemaError::MalformedJson(e.to_string()))
}

pub fn as_object<'a>(
    value: &'a Value,
    path: &str,
) -> Result<&'a serde_json::Map<String, Value>, SchemaError> {
    value.as_object().ok_or(SchemaError::WrongType {
        path: path.to_string(),
        expected: "object",
    })
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

pub fn require<'a>(
    obj: &'a serde_json::Map<String, Value>,
    path: &str,
    key: &str,
) -> Result<&'a Value, SchemaError> {
    obj.get(key)
        .ok_or_else(|| SchemaError::MissingField(join(path, key)))
}

pub fn require_str(
    obj: &serde_json::Map<String, Value>,
    path: &str,
    key: &str,
) -> Result<String, SchemaError> {
    let v = require(obj, path, key)?;
    v.as_str().map(str::to_string).ok_or(SchemaError::WrongType {
        path: join(path, key),
        expected: "string",
    })
}

pub fn require_f64(
    obj: &serde_json::Map<String, Value>,
    path: &str,
    key: &str,
) -> Result<f64, SchemaError> {
    let v = require(obj, path, key)?;
    v.as_f64().ok_or(SchemaError::WrongType {
        path: join(path, key),
        expected: "number",
    })
}

pub fn require_array<'a>(
    obj: &'a serde_json::Map<String, Value>,
    path: &str,
    key: &str,
) -> Result<&'a Vec<Value>, SchemaError> {
    let v = require(obj, path, key)?;
    v.as_array().ok_or(SchemaError::WrongType {
        path: join(path, key),
        expected: "array",
    })
}

/// Optional string list; absent or `null` maps to an empty list.
pub fn opt_string_list(
    obj: &serde_json::Map<String, Value>,
    path: &str,
    key: &str,
) -> Result<Vec<String>, SchemaError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(v) => string_list(v, &join(path, key)),
    }
}

pub fn string_list(value: &Value, path: &str) -> Result<Vec<String>, SchemaError> {
    let arr = value.as_array().ok_or(SchemaError::WrongType {
        path: path.to_string(),
        expected: "array of strings",
    })?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_str().map(str::to_string).ok_or(SchemaError::WrongType {
                path: format!("{path}[{i}]"),
                expected: "string",
            })
        })
        .collect()
}
