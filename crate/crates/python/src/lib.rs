//! Python bindings for the colloquy engine: agent parsing and validation,
//! template rendering, transcript metrics, and deterministic scripted runs.

use colloquy::agent::{canonicalize, parse_agent_definition, validate_agent_definition};
use colloquy::backend::{parse_script, ScriptedBackend};
use colloquy::clock::FixedClock;
use colloquy::metrics::{self, SentimentLexicon};
use colloquy::orchestrator::{run_simulation, RunContext, SimulationConfig};
use colloquy::prompt::Bindings;
use colloquy::reporting::{emit_html, emit_text, ReportOptions};
use colloquy::scenario::parse_scenario;
use colloquy::tools::ToolRegistry;
use colloquy::transcript::{Message, Transcript};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::collections::BTreeMap;

fn value_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None().into_bound(py),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(value_to_py(py, item)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, value_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Parse an agent definition document. Returns
/// `{"definition": {...}, "warnings": [...]}`.
#[pyfunction]
fn parse_agent<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
    let parsed = parse_agent_definition(text).map_err(err)?;
    let value = serde_json::to_value(&parsed.definition).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("definition", value_to_py(py, &value)?)?;
    out.set_item("warnings", parsed.warnings)?;
    Ok(out)
}

/// Violation messages for an agent document; an empty list means valid.
#[pyfunction]
fn validate_agent(text: &str) -> PyResult<Vec<String>> {
    let parsed = parse_agent_definition(text).map_err(err)?;
    Ok(validate_agent_definition(&parsed.definition)
        .iter()
        .map(|v| v.to_string())
        .collect())
}

/// Canonical JSON form of an agent document (sorted keys, trailing newline).
#[pyfunction]
fn canonicalize_agent(text: &str) -> PyResult<String> {
    let parsed = parse_agent_definition(text).map_err(err)?;
    Ok(canonicalize(&parsed.definition))
}

/// Sorted list of `{name}` variables referenced by an f-string template.
#[pyfunction]
fn extract_variables(template: &str) -> PyResult<Vec<String>> {
    Ok(colloquy::prompt::extract_variables(template)
        .map_err(err)?
        .into_iter()
        .collect())
}

#[pyfunction]
fn render_template(template: &str, bindings: BTreeMap<String, String>) -> PyResult<String> {
    let bindings: Bindings = bindings.into_iter().collect();
    colloquy::prompt::render_template(template, &bindings).map_err(err)
}

#[pyfunction]
fn normalize_text(text: &str) -> Vec<String> {
    metrics::normalize_text(text)
}

fn transcript_from(messages: Vec<String>) -> Transcript {
    let mut transcript = Transcript::new();
    for (i, content) in messages.into_iter().enumerate() {
        let ts = chrono_timestamp(i as i64);
        transcript.push(Message::new(i, "agent", &content, ts));
    }
    transcript
}

fn chrono_timestamp(secs: i64) -> chrono::DateTime<chrono::Utc> {
    chrono::DateTime::from_timestamp(secs, 0).expect("valid timestamp")
}

#[pyfunction]
fn unique_content_pct(messages: Vec<String>) -> PyResult<f64> {
    metrics::unique_content_pct(&transcript_from(messages)).map_err(err)
}

#[pyfunction]
fn diversity_score(messages: Vec<String>) -> PyResult<f64> {
    metrics::diversity_score(&transcript_from(messages)).map_err(err)
}

#[pyfunction]
fn sentiment_stability(messages: Vec<String>) -> f64 {
    metrics::sentiment_stability(&transcript_from(messages), &SentimentLexicon::builtin())
}

#[pyfunction]
fn context_retention(messages: Vec<String>) -> f64 {
    metrics::context_retention(&transcript_from(messages))
}

/// Run one simulation on the scripted backend under a fixed clock and return
/// `{"status", "transcript", "metrics", "snapshot", "chat_text", "chat_html"}`.
#[pyfunction]
#[pyo3(signature = (config_json, agent_docs, scenario_json, script_json, fixed_clock_epoch = 0))]
fn run_scripted_simulation<'py>(
    py: Python<'py>,
    config_json: &str,
    agent_docs: Vec<String>,
    scenario_json: &str,
    script_json: &str,
    fixed_clock_epoch: i64,
) -> PyResult<Bound<'py, PyDict>> {
    let config: SimulationConfig = serde_json::from_str(config_json).map_err(err)?;
    let mut agents = BTreeMap::new();
    for doc in &agent_docs {
        let parsed = parse_agent_definition(doc).map_err(err)?;
        agents.insert(parsed.definition.agent_name.clone(), parsed.definition);
    }
    let scenario = parse_scenario(scenario_json).map_err(err)?;
    let script = parse_script(script_json).map_err(err)?;
    let backend = ScriptedBackend::new(script);
    let tools = ToolRegistry::with_stub_search(BTreeMap::new());
    let clock = FixedClock::new(fixed_clock_epoch);

    let ctx = RunContext {
        config: &config,
        agents: &agents,
        scenario: &scenario,
        backend: &backend,
        tools: &tools,
        clock: &clock,
    };
    let mut run = run_simulation(&ctx, None);
    if run.status.is_ok() {
        run.metrics =
            colloquy::metrics::compute_metrics(&run.transcript, &scenario, &SentimentLexicon::builtin())
                .ok();
    }

    let out = PyDict::new(py);
    out.set_item("status", run.status.label())?;
    let transcript = PyList::empty(py);
    for msg in run.transcript.iter() {
        let m = PyDict::new(py);
        m.set_item("index", msg.index)?;
        m.set_item("agent_name", &msg.agent_name)?;
        m.set_item("content", &msg.content)?;
        m.set_item("timestamp", colloquy::clock::format_timestamp(&msg.timestamp))?;
        m.set_item("tool_calls", msg.tool_trace.len())?;
        transcript.append(m)?;
    }
    out.set_item("transcript", transcript)?;
    match &run.metrics {
        Some(report) => out.set_item("metrics", value_to_py(py, &report.to_json_value())?)?,
        None => out.set_item("metrics", py.None())?,
    }
    out.set_item("snapshot", &run.config_snapshot)?;
    out.set_item("chat_text", emit_text(&run))?;
    out.set_item("chat_html", emit_html(&run, &ReportOptions::default()))?;
    Ok(out)
}

#[pymodule]
fn colloquy_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse_agent, m)?)?;
    m.add_function(wrap_pyfunction!(validate_agent, m)?)?;
    m.add_function(wrap_pyfunction!(canonicalize_agent, m)?)?;
    m.add_function(wrap_pyfunction!(extract_variables, m)?)?;
    m.add_function(wrap_pyfunction!(render_template, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_text, m)?)?;
    m.add_function(wrap_pyfunction!(unique_content_pct, m)?)?;
    m.add_function(wrap_pyfunction!(diversity_score, m)?)?;
    m.add_function(wrap_pyfunction!(sentiment_stability, m)?)?;
    m.add_function(wrap_pyfunction!(context_retention, m)?)?;
    m.add_function(wrap_pyfunction!(run_scripted_simulation, m)?)?;
    Ok(())
}
