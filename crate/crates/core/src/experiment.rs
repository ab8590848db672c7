//! Experiment matrices: a list of simulation configs resolved against shared
//! defaults, executed as a batch, and aggregated into a results table.
//!
//! Matrix file (`.experiment.json`):
//! `{"defaults": {scenario, agents_dir, lexicon?, backend?, <entry defaults>},
//!   "simulations": [{sim_id, model_type, iterations, temperature,
//!                    agents_involved[], selection?, memory?, notes?}, ...]}`
//! Paths in `defaults` resolve relative to the matrix file.

use crate::agent::{load_agent_definition, AgentDefinition};
use crate::backend::ChatBackend;
use crate::clock::{Clock, FixedClock, SystemClock};
use crate::metrics::{compute_metrics, MetricsReport, SentimentLexicon};
use crate::orchestrator::{
    run_simulation, RunContext, SimulationConfig, SpeakerSelection, DEFAULT_MAX_TOOL_CALLS,
};
use crate::prompt::Bindings;
use crate::reporting::{persist_run, ReportOptions};
use crate::scenario::{load_scenario, Scenario};
use crate::schema::{as_object, parse_json, require, require_array, SchemaError};
use crate::tools::ToolRegistry;
use crate::transcript::MemoryPolicy;
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("duplicate sim_id {0}")]
    DuplicateSimId(u64),
    #[error("sim {sim_id} references unknown agent {name:?}")]
    MissingAgentRef { sim_id: u64, name: String },
}

/// Backend selection carried by the matrix defaults; the CLI can override it.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Scripted { script: PathBuf },
    Replay { fixture_dir: PathBuf },
    RemoteHttp { endpoint: String, token_env: String },
}

#[derive(Debug, Clone)]
pub struct ExperimentMatrix {
    pub simulations: Vec<SimulationConfig>,
}

/// A matrix plus everything its entries reference, fully resolved.
pub struct LoadedExperiment {
    pub matrix: ExperimentMatrix,
    pub agents: BTreeMap<String, AgentDefinition>,
    pub scenario: Scenario,
    pub lexicon: SentimentLexicon,
    pub backend: Option<BackendSpec>,
    pub base_dir: PathBuf,
}

fn enum_from_value<T: serde::de::DeserializeOwned>(
    value: &Value,
    path: &str,
) -> Result<T, SchemaError> {
    serde_json::from_value(value.clone())
        .map_err(|e| SchemaError::Invalid { path: path.to_string(), detail: e.to_string() })
}

fn bindings_from_value(value: &Value, path: &str) -> Result<Bindings, SchemaError> {
    let obj = as_object(value, path)?;
    let mut out = Bindings::new();
    for (k, v) in obj {
        let s = v.as_str().ok_or(SchemaError::WrongType {
            path: format!("{path}.{k}"),
            expected: "string",
        })?;
        out.insert(k.clone(), s.to_string());
    }
    Ok(out)
}

struct EntryDefaults {
    model_type: Option<String>,
    iterations: Option<u32>,
    temperature: Option<f64>,
    agents_involved: Option<Vec<String>>,
    selection: Option<SpeakerSelection>,
    memory: Option<MemoryPolicy>,
    elaboration_enabled: Option<bool>,
    max_tool_calls: Option<u32>,
    seed_inputs: Option<Bindings>,
}

fn parse_entry_defaults(obj: &serde_json::Map<String, Value>, path: &str) -> Result<EntryDefaults, SchemaError> {
    let get_u32 = |key: &str| -> Result<Option<u32>, SchemaError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => Ok(Some(v.as_u64().ok_or(SchemaError::WrongType {
                path: format!("{path}.{key}"),
                expected: "positive integer",
            })? as u32)),
        }
    };
    Ok(EntryDefaults {
        model_type: match obj.get("model_type") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                v.as_str()
                    .ok_or(SchemaError::WrongType {
                        path: format!("{path}.model_type"),
                        expected: "string",
                    })?
                    .to_string(),
            ),
        },
        iterations: get_u32("iterations")?,
        temperature: match obj.get("temperature") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_f64().ok_or(SchemaError::WrongType {
                path: format!("{path}.temperature"),
                expected: "number",
            })?),
        },
        agents_involved: match obj.get("agents_involved") {
            None | Some(Value::Null) => None,
            Some(v) => Some(crate::schema::string_list(v, &format!("{path}.agents_involved"))?),
        },
        selection: match obj.get("selection") {
            None | Some(Value::Null) => None,
            Some(v) => Some(enum_from_value(v, &format!("{path}.selection"))?),
        },
        memory: match obj.get("memory") {
            None | Some(Value::Null) => None,
            Some(v) => Some(enum_from_value(v, &format!("{path}.memory"))?),
        },
        elaboration_enabled: match obj.get("elaboration_enabled") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_bool().ok_or(SchemaError::WrongType {
                path: format!("{path}.elaboration_enabled"),
                expected: "boolean",
            })?),
        },
        max_tool_calls: get_u32("max_tool_calls")?,
        seed_inputs: match obj.get("seed_inputs") {
            None | Some(Value::Null) => None,
            Some(v) => Some(bindings_from_value(v, &format!("{path}.seed_inputs"))?),
        },
    })
}

fn parse_backend_spec(value: &Value, base_dir: &Path) -> Result<BackendSpec, SchemaError> {
    let obj = as_object(value, "defaults.backend")?;
    let kind = crate::schema::require_str(obj, "defaults.backend", "kind")?;
    match kind.as_str() {
        "scripted" => {
            let script = crate::schema::require_str(obj, "defaults.backend", "script")?;
            Ok(BackendSpec::Scripted { script: base_dir.join(script) })
        }
        "replay" => {
            let dir = crate::schema::require_str(obj, "defaults.backend", "fixture_dir")?;
            Ok(BackendSpec::Replay { fixture_dir: base_dir.join(dir) })
        }
        "remote_http" => Ok(BackendSpec::RemoteHttp {
            endpoint: crate::schema::require_str(obj, "defaults.backend", "endpoint")?,
            token_env: crate::schema::require_str(obj, "defaults.backend", "token_env")?,
        }),
        other => Err(SchemaError::BadEnumValue {
            path: "defaults.backend.kind".into(),
            got: other.to_string(),
        }),
    }
}

/// Load a matrix file and resolve everything it references: per-entry
/// defaults, the agent registry from `agents_dir`, the scenario, and the
/// lexicon. Every `agents_involved` ref must resolve.
pub fn load_matrix(path: &Path) -> Result<LoadedExperiment, MatrixError> {
    let raw = std::fs::read_to_string(path).map_err(|e| SchemaError::Invalid {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let value = parse_json(&raw)?;
    let obj = as_object(&value, "")?;

    let defaults_value = require(obj, "", "defaults")?;
    let defaults_obj = as_object(defaults_value, "defaults")?;
    let scenario_path = base_dir.join(crate::schema::require_str(defaults_obj, "defaults", "scenario")?);
    let agents_dir = base_dir.join(crate::schema::require_str(defaults_obj, "defaults", "agents_dir")?);
    let lexicon = match defaults_obj.get("lexicon") {
        None | Some(Value::Null) => SentimentLexicon::builtin(),
        Some(v) => {
            let rel = v.as_str().ok_or(SchemaError::WrongType {
                path: "defaults.lexicon".into(),
                expected: "string",
            })?;
            SentimentLexicon::load(&base_dir.join(rel))?
        }
    };
    let backend = match defaults_obj.get("backend") {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_backend_spec(v, &base_dir)?),
    };
    let defaults = parse_entry_defaults(defaults_obj, "defaults")?;

    let scenario = load_scenario(&scenario_path)?;
    let agents = load_agents_dir(&agents_dir)?;

    let sims_value = require_array(obj, "", "simulations")?;
    let mut simulations = Vec::with_capacity(sims_value.len());
    let mut seen_ids = std::collections::BTreeSet::new();
    for (i, sim) in sims_value.iter().enumerate() {
        let path = format!("simulations[{i}]");
        let sobj = as_object(sim, &path)?;
        let sim_id = require(sobj, &path, "sim_id")?
            .as_u64()
            .ok_or(SchemaError::WrongType {
                path: format!("{path}.sim_id"),
                expected: "positive integer",
            })?;
        if sim_id == 0 {
            return Err(SchemaError::Invalid {
                path: format!("{path}.sim_id"),
                detail: "must be positive".into(),
            }
            .into());
        }
        if !seen_ids.insert(sim_id) {
            return Err(MatrixError::DuplicateSimId(sim_id));
        }
        let entry = parse_entry_defaults(sobj, &path)?;
        let notes = match sobj.get("notes") {
            None | Some(Value::Null) => String::new(),
            Some(v) => v
                .as_str()
                .ok_or(SchemaError::WrongType { path: format!("{path}.notes"), expected: "string" })?
                .to_string(),
        };
        let simulation_name = match sobj.get("simulation_name") {
            None | Some(Value::Null) => {
                if notes.is_empty() {
                    format!("simulation-{sim_id}")
                } else {
                    notes.clone()
                }
            }
            Some(v) => v
                .as_str()
                .ok_or(SchemaError::WrongType {
                    path: format!("{path}.simulation_name"),
                    expected: "string",
                })?
                .to_string(),
        };
        let agents_involved = entry
            .agents_involved
            .or_else(|| defaults.agents_involved.clone())
            .ok_or_else(|| SchemaError::MissingField(format!("{path}.agents_involved")))?;

        let config = SimulationConfig {
            sim_id,
            simulation_name,
            model_type: entry
                .model_type
                .or_else(|| defaults.model_type.clone())
                .unwrap_or_default(),
            iterations: entry.iterations.or(defaults.iterations).unwrap_or(10),
            temperature: entry.temperature.or(defaults.temperature).unwrap_or(0.7),
            agents_involved,
            selection: entry
                .selection
                .or_else(|| defaults.selection.clone())
                .unwrap_or(SpeakerSelection::Alternate),
            memory: entry.memory.or(defaults.memory).unwrap_or(MemoryPolicy::Full),
            elaboration_enabled: entry
                .elaboration_enabled
                .or(defaults.elaboration_enabled)
                .unwrap_or(false),
            seed_inputs: entry
                .seed_inputs
                .or_else(|| defaults.seed_inputs.clone())
                .unwrap_or_default(),
            max_tool_calls: entry
                .max_tool_calls
                .or(defaults.max_tool_calls)
                .unwrap_or(DEFAULT_MAX_TOOL_CALLS),
            notes,
        };
        for name in &config.agents_involved {
            if !agents.contains_key(name) {
                return Err(MatrixError::MissingAgentRef { sim_id, name: name.clone() });
            }
        }
        simulations.push(config);
    }

    Ok(LoadedExperiment {
        matrix: ExperimentMatrix { simulations },
        agents,
        scenario,
        lexicon,
        backend,
        base_dir,
    })
}

/// All `*.agent.json` files in a directory, indexed by agent name.
pub fn load_agents_dir(dir: &Path) -> Result<BTreeMap<String, AgentDefinition>, SchemaError> {
    let mut agents = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| SchemaError::Invalid {
        path: dir.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().ends_with(".agent.json")))
        .collect();
    paths.sort();
    for path in paths {
        let parsed = load_agent_definition(&path)?;
        let name = parsed.definition.agent_name.clone();
        if agents.insert(name.clone(), parsed.definition).is_some() {
            return Err(SchemaError::Invalid {
                path: path.display().to_string(),
                detail: format!("duplicate agent name {name:?}"),
            });
        }
    }
    Ok(agents)
}

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub sim_id: u64,
    pub model_type: String,
    pub metrics: Option<MetricsReport>,
    pub status: String,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

/// How each run in a batch gets its clock.
#[derive(Debug, Clone, Copy)]
pub enum ClockSpec {
    System,
    /// Every run starts its own fixed clock at this epoch, which keeps batch
    /// output independent of scheduling.
    Fixed { epoch_secs: i64 },
}

impl ClockSpec {
    fn make(&self) -> Box<dyn Clock> {
        match self {
            ClockSpec::System => Box::new(SystemClock),
            ClockSpec::Fixed { epoch_secs } => Box::new(FixedClock::new(*epoch_secs)),
        }
    }
}

pub struct BatchOptions {
    pub out_dir: Option<PathBuf>,
    pub clock: ClockSpec,
    /// 0 means auto: min(4, number of entries).
    pub workers: usize,
    pub report: ReportOptions,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            out_dir: None,
            clock: ClockSpec::System,
            workers: 0,
            report: ReportOptions::default(),
        }
    }
}

pub type BackendFactory<'a> = dyn Fn(&SimulationConfig) -> Box<dyn ChatBackend> + Sync + 'a;

/// Run every entry, in matrix order in the output regardless of scheduling.
/// A failing run yields an `aborted` row and never stops the batch.
pub fn run_matrix(
    experiment: &LoadedExperiment,
    backend_factory: &BackendFactory<'_>,
    tools: &ToolRegistry,
    options: &BatchOptions,
) -> ResultsTable {
    let sims = &experiment.matrix.simulations;
    let n = sims.len();
    if n == 0 {
        return ResultsTable::default();
    }
    let workers = if options.workers == 0 { n.min(4) } else { options.workers.min(n) };

    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<ResultRow>>> = Mutex::new(vec![None; n]);

    let execute = |index: usize| -> ResultRow {
        let config = &sims[index];
        let clock = options.clock.make();
        let backend = backend_factory(config);
        let run_dir = options.out_dir.as_ref().map(|d| d.join(config.sim_id.to_string()));
        let ctx = RunContext {
            config,
            agents: &experiment.agents,
            scenario: &experiment.scenario,
            backend: backend.as_ref(),
            tools,
            clock: clock.as_ref(),
        };
        let mut run = run_simulation(&ctx, run_dir.as_deref());
        if run.status.is_ok() {
            run.metrics =
                compute_metrics(&run.transcript, &experiment.scenario, &experiment.lexicon).ok();
        }
        if let Some(dir) = &run_dir {
            // snapshot already exists; rewrite the full set including metrics
            if let Err(e) = persist_run(&run, dir, &options.report) {
                eprintln!("warning: failed to persist artifacts for sim {}: {e}", config.sim_id);
            }
        }
        ResultRow {
            sim_id: config.sim_id,
            model_type: config.model_type.clone(),
            metrics: run.metrics.clone(),
            status: run.status.label().to_string(),
            wall_ms: run.wall_ms,
        }
    };

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= n {
                    break;
                }
                let row = execute(index);
                rows.lock().expect("rows lock")[index] = Some(row);
            });
        }
    });

    let rows = rows.into_inner().expect("rows lock");
    ResultsTable { rows: rows.into_iter().map(|r| r.expect("every index executed")).collect() }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') || s.contains('\r') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const RESULTS_CSV_HEADER: &str = "sim_id,model_type,unique_content_pct,diversity_score,\
completion_score,sentiment_stability,context_retention,status,wall_ms";

/// RFC-4180 CSV with one row per matrix entry in matrix order. Metric cells
/// are formatted to 2 decimals; failed runs leave them empty.
pub fn emit_results_csv(table: &ResultsTable) -> String {
    let mut out = String::from(RESULTS_CSV_HEADER);
    out.push('\n');
    for row in &table.rows {
        let metric_cells = match &row.metrics {
            Some(m) => format!(
                "{:.2},{:.2},{:.2},{:.2},{:.2}",
                m.unique_content_pct,
                m.diversity_score,
                m.completion_score,
                m.sentiment_stability,
                m.context_retention
            ),
            None => ",,,,".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.sim_id,
            csv_field(&row.model_type),
            metric_cells,
            csv_field(&row.status),
            row.wall_ms
        ));
    }
    out
}

/// Per-metric means over successful rows, the inputs for a radar chart.
pub fn emit_summary_json(table: &ResultsTable) -> String {
    let ok: Vec<&MetricsReport> = table.rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let means = if ok.is_empty() {
        Value::Null
    } else {
        let n = ok.len() as f64;
        let r2 = |x: f64| (x * 100.0).round() / 100.0;
        serde_json::json!({
            "unique_content_pct": r2(ok.iter().map(|m| m.unique_content_pct).sum::<f64>() / n),
            "diversity_score": r2(ok.iter().map(|m| m.diversity_score).sum::<f64>() / n),
            "completion_score": r2(ok.iter().map(|m| m.completion_score).sum::<f64>() / n),
            "sentiment_stability": r2(ok.iter().map(|m| m.sentiment_stability).sum::<f64>() / n),
            "context_retention": r2(ok.iter().map(|m| m.context_retention).sum::<f64>() / n),
        })
    };
    let value = serde_json::json!({
        "means": means,
        "runs_ok": table.rows.iter().filter(|r| r.status == "ok").count(),
        "runs_total": table.rows.len(),
    });
    crate::canonical::to_canonical_document(&value)
}
