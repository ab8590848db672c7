//! One simulation run: iterate turns, pick speakers, assemble prompts, call
//! the backend, resolve tool directives, and record messages plus execution
//! events until the configured iteration count or the first hard error.

use crate::agent::{AgentDefinition, SamplingParams};
use crate::backend::{BackendError, ChatBackend, ChatRequest};
use crate::canonical::{sha256_hex, to_canonical_document};
use crate::clock::Clock;
use crate::metrics::MetricsReport;
use crate::prompt::{build_prompt, Bindings, RenderedMessage, TemplateError};
use crate::rng::nth_output;
use crate::scenario::Scenario;
use crate::schema::SchemaError;
use crate::tools::{invoke_tool, parse_tool_directive, ToolError, ToolRegistry};
use crate::transcript::{Message, MemoryPolicy, ToolTraceEntry, Transcript};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

/// Sentence appended to the instruction when topic elaboration is enabled.
pub const ELABORATION_PROMPT: &str =
    "Please elaborate on this topic with additional depth and concrete detail.";

pub const DEFAULT_MAX_TOOL_CALLS: u32 = 3;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeakerSelection {
    /// Round-robin over the roster in declared order.
    #[default]
    Alternate,
    /// Uniform draw from the roster, excluding the immediately previous
    /// speaker when the roster has more than one agent. Step `i` consumes
    /// output `i` of the seeded generator.
    SeededRandom { seed: u64 },
    /// Fixed rule cycled over the run.
    Directed { rule: Vec<String> },
}

fn default_max_tool_calls() -> u32 {
    DEFAULT_MAX_TOOL_CALLS
}

fn default_memory() -> MemoryPolicy {
    MemoryPolicy::Full
}

/// Full parameterization of one run; the reproducibility key. The config
/// temperature and model type override the per-agent sampling params.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub sim_id: u64,
    pub simulation_name: String,
    pub model_type: String,
    pub iterations: u32,
    pub temperature: f64,
    pub agents_involved: Vec<String>,
    #[serde(default)]
    pub selection: SpeakerSelection,
    #[serde(default = "default_memory")]
    pub memory: MemoryPolicy,
    #[serde(default)]
    pub elaboration_enabled: bool,
    #[serde(default)]
    pub seed_inputs: Bindings,
    #[serde(default = "default_max_tool_calls")]
    pub max_tool_calls: u32,
    #[serde(default)]
    pub notes: String,
}

impl SimulationConfig {
    /// Human-readable config problems; empty means the config is runnable.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.sim_id == 0 {
            issues.push("sim_id must be positive".to_string());
        }
        if self.iterations == 0 {
            issues.push("iterations must be at least 1".to_string());
        }
        if self.agents_involved.is_empty() {
            issues.push("agents_involved must not be empty".to_string());
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &self.agents_involved {
            if !seen.insert(name) {
                issues.push(format!("agent {name:?} listed more than once"));
            }
        }
        if matches!(self.selection, SpeakerSelection::Alternate) && self.agents_involved.len() < 2 {
            issues.push("alternate selection requires at least 2 agents".to_string());
        }
        if let SpeakerSelection::Directed { rule } = &self.selection {
            if rule.is_empty() {
                issues.push("directed rule must not be empty".to_string());
            }
            for name in rule {
                if !self.agents_involved.contains(name) {
                    issues.push(format!("directed rule names {name:?}, not in agents_involved"));
                }
            }
        }
        if let MemoryPolicy::LastK { k } = self.memory {
            if k == 0 {
                issues.push("memory last_k requires k >= 1".to_string());
            }
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            issues.push(format!("temperature {} outside [0, 1]", self.temperature));
        }
        issues
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventLevel {
    Info,
    Warning,
    Error,
}

impl EventLevel {
    pub fn label(&self) -> &'static str {
        match self {
            EventLevel::Info => "INFO",
            EventLevel::Warning => "WARNING",
            EventLevel::Error => "ERROR",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionEvent {
    pub timestamp: DateTime<Utc>,
    pub level: EventLevel,
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok,
    Aborted { code: String },
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunStatus::Ok)
    }

    pub fn label(&self) -> &str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Aborted { .. } => "aborted",
        }
    }
}

/// The durable artifact bundle for one run.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    /// Canonical JSON written before the first turn executes, so aborted runs
    /// stay reproducible.
    pub config_snapshot: String,
    pub transcript: Transcript,
    pub execution_log: Vec<ExecutionEvent>,
    pub metrics: Option<MetricsReport>,
    pub status: RunStatus,
    pub wall_ms: u64,
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("roster is empty")]
    EmptyRoster,
    #[error("agent {name:?} is not part of this simulation")]
    UnknownAgent { name: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl OrchestratorError {
    /// Stable event code for execution logs.
    pub fn code(&self) -> String {
        match self {
            OrchestratorError::EmptyRoster => "orchestrator.empty_roster".into(),
            OrchestratorError::UnknownAgent { .. } => "orchestrator.unknown_agent".into(),
            OrchestratorError::InvalidConfig(_) => "config.invalid".into(),
            OrchestratorError::Backend(e) => e.code().into(),
            OrchestratorError::Tool(e) => match e {
                ToolError::MalformedDirective { .. } => "tools.malformed_directive".into(),
                ToolError::ToolNotGranted { .. } => "tools.not_granted".into(),
                ToolError::ToolUnknown { .. } => "tools.unknown".into(),
                ToolError::DuplicateTool { .. } => "tools.duplicate".into(),
            },
            OrchestratorError::Template(e) => match e {
                TemplateError::UnbalancedBrace { .. } => "prompt.unbalanced_brace".into(),
                TemplateError::MissingBinding { .. } => "prompt.missing_binding".into(),
            },
        }
    }
}

/// Pick the speaker for `step`. Pure: the seeded policy derives its draw from
/// (seed, step) alone, so replays of any prefix agree with the original run.
pub fn select_next_speaker(
    selection: &SpeakerSelection,
    step: usize,
    roster: &[String],
    transcript: &Transcript,
) -> Result<usize, OrchestratorError> {
    if roster.is_empty() {
        return Err(OrchestratorError::EmptyRoster);
    }
    match selection {
        SpeakerSelection::Alternate => Ok(step % roster.len()),
        SpeakerSelection::SeededRandom { seed } => {
            let previous = transcript
                .last()
                .and_then(|m| roster.iter().position(|n| *n == m.agent_name));
            let candidates: Vec<usize> = match previous {
                Some(prev) if roster.len() > 1 => {
                    (0..roster.len()).filter(|i| *i != prev).collect()
                }
                _ => (0..roster.len()).collect(),
            };
            let draw = nth_output(*seed, step as u64);
            Ok(candidates[(draw % candidates.len() as u64) as usize])
        }
        SpeakerSelection::Directed { rule } => {
            let name = &rule[step % rule.len()];
            roster
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| OrchestratorError::UnknownAgent { name: name.clone() })
        }
    }
}

/// Everything a run needs, borrowed: the orchestrator owns no configuration.
pub struct RunContext<'a> {
    pub config: &'a SimulationConfig,
    pub agents: &'a BTreeMap<String, AgentDefinition>,
    pub scenario: &'a Scenario,
    pub backend: &'a dyn ChatBackend,
    pub tools: &'a ToolRegistry,
    pub clock: &'a dyn Clock,
}

/// In-flight run state. `step` is exposed so tests can drive turns directly.
pub struct SimulationState<'a> {
    ctx: &'a RunContext<'a>,
    transcript: Transcript,
    events: Vec<ExecutionEvent>,
}

impl<'a> SimulationState<'a> {
    pub fn new(ctx: &'a RunContext<'a>) -> Result<Self, OrchestratorError> {
        let mut issues = ctx.config.validate();
        for name in &ctx.config.agents_involved {
            if !ctx.agents.contains_key(name) {
                issues.push(format!("agent {name:?} cannot be resolved"));
            }
        }
        if !issues.is_empty() {
            return Err(OrchestratorError::InvalidConfig(issues.join("; ")));
        }
        Ok(Self { ctx, transcript: Transcript::new(), events: Vec::new() })
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn events(&self) -> &[ExecutionEvent] {
        &self.events
    }

    fn log(&mut self, level: EventLevel, code: &str, detail: String) {
        self.events.push(ExecutionEvent {
            timestamp: self.ctx.clock.now(),
            level,
            code: code.to_string(),
            detail,
        });
    }

    /// Execute one turn: select the speaker, build the prompt, run the
    /// bounded tool loop, and append the resulting message.
    pub fn step(&mut self) -> Result<&Message, OrchestratorError> {
        let cfg = self.ctx.config;
        let index = self.transcript.len();
        let started = self.ctx.clock.now();

        let roster = &cfg.agents_involved;
        let speaker = select_next_speaker(&cfg.selection, index, roster, &self.transcript)?;
        let agent_name = roster[speaker].clone();
        let def = self
            .ctx
            .agents
            .get(&agent_name)
            .ok_or_else(|| OrchestratorError::UnknownAgent { name: agent_name.clone() })?;

        // The per-turn instruction is the previous speaker's full message;
        // the scenario provides the kickoff at step 0.
        let mut instruction = match self.transcript.last() {
            Some(previous) => previous.content.clone(),
            None => self.ctx.scenario.kickoff_instruction.clone(),
        };
        if cfg.elaboration_enabled {
            instruction.push(' ');
            instruction.push_str(ELABORATION_PROMPT);
        }

        let mut bindings: Bindings = self.ctx.scenario.seed_inputs.clone();
        bindings.extend(cfg.seed_inputs.clone());
        bindings.insert("instruction".to_string(), instruction);

        let built = build_prompt(def, &bindings, &self.transcript, &cfg.memory)?;
        for warning in &built.warnings {
            self.log(EventLevel::Warning, "prompt.unknown_binding", warning.clone());
        }

        let sampling = SamplingParams { temperature: cfg.temperature, ..def.llm.clone() };
        let model_name = if cfg.model_type.is_empty() {
            def.llm.model_name.clone()
        } else {
            cfg.model_type.clone()
        };

        let mut working = built.messages;
        let mut tool_trace: Vec<ToolTraceEntry> = Vec::new();
        let final_text = loop {
            let request = ChatRequest {
                model_name: model_name.clone(),
                messages: working.clone(),
                sampling: sampling.clone(),
            };
            let response = self.ctx.backend.complete(&agent_name, &request)?;
            match parse_tool_directive(&response.text)? {
                None => break response.text,
                Some(directive) => {
                    if tool_trace.len() >= cfg.max_tool_calls as usize {
                        self.log(
                            EventLevel::Warning,
                            "tools.loop_bound",
                            format!(
                                "turn={index} agent={agent_name} reached max_tool_calls={}",
                                cfg.max_tool_calls
                            ),
                        );
                        break response.text;
                    }
                    let result = invoke_tool(self.ctx.tools, &def.tools, &directive)?;
                    working.push(RenderedMessage::assistant(response.text.clone()));
                    working.push(RenderedMessage::user(format!(
                        "TOOL({}): {}",
                        directive.tool_name, result.content
                    )));
                    tool_trace.push(ToolTraceEntry { directive, result });
                }
            }
        };

        let mut message = Message::new(index, &agent_name, &final_text, self.ctx.clock.now());
        message.tool_trace = tool_trace;
        self.transcript.push(message);

        let finished = self.ctx.clock.now();
        let ms = (finished - started).num_milliseconds().max(0);
        self.log(
            EventLevel::Info,
            "turn.duration",
            format!("turn={index} agent={agent_name} ms={ms}"),
        );
        Ok(self.transcript.last().expect("just pushed"))
    }
}

/// Canonical snapshot of everything needed to re-execute a run identically:
/// the config, digests of the agent definitions, the backend descriptor, and
/// the scenario identity. Never contains secrets.
pub fn build_snapshot(
    config: &SimulationConfig,
    agents: &BTreeMap<String, AgentDefinition>,
    backend: &dyn ChatBackend,
    scenario: &Scenario,
) -> String {
    let mut agent_digests = serde_json::Map::new();
    for name in &config.agents_involved {
        if let Some(def) = agents.get(name) {
            agent_digests.insert(
                name.clone(),
                serde_json::json!({ "digest": sha256_hex(crate::agent::canonicalize(def).as_bytes()) }),
            );
        }
    }
    let scenario_value = serde_json::to_value(scenario).expect("scenario serializes");
    let value = serde_json::json!({
        "agents": agent_digests,
        "backend": backend.descriptor(),
        "config": serde_json::to_value(config).expect("config serializes"),
        "scenario": {
            "name": scenario.name,
            "digest": sha256_hex(crate::canonical::to_canonical_string(&scenario_value).as_bytes()),
        },
    });
    to_canonical_document(&value)
}

/// Re-extract the config from a snapshot produced by `build_snapshot`.
pub fn parse_snapshot_config(snapshot: &str) -> Result<SimulationConfig, SchemaError> {
    let value = crate::schema::parse_json(snapshot)?;
    let config = value
        .get("config")
        .ok_or_else(|| SchemaError::MissingField("config".into()))?;
    serde_json::from_value(config.clone())
        .map_err(|e| SchemaError::Invalid { path: "config".into(), detail: e.to_string() })
}

/// Drive a full run. The snapshot is composed (and, when `out_dir` is given,
/// written to `config.snapshot.json`) before the first turn executes. A step
/// error aborts the run, preserving the partial transcript and logging an
/// error event; it is not retried.
pub fn run_simulation(ctx: &RunContext<'_>, out_dir: Option<&Path>) -> SimulationRun {
    let snapshot = build_snapshot(ctx.config, ctx.agents, ctx.backend, ctx.scenario);
    let run_started = ctx.clock.now();
    let mut events = Vec::new();

    if let Some(dir) = out_dir {
        let result = std::fs::create_dir_all(dir).and_then(|_| {
            std::fs::write(dir.join("config.snapshot.json"), snapshot.as_bytes())
        });
        if let Err(e) = result {
            events.push(ExecutionEvent {
                timestamp: ctx.clock.now(),
                level: EventLevel::Error,
                code: "artifact.io".into(),
                detail: e.to_string(),
            });
            return SimulationRun {
                config_snapshot: snapshot,
                transcript: Transcript::new(),
                execution_log: events,
                metrics: None,
                status: RunStatus::Aborted { code: "artifact.io".into() },
                wall_ms: 0,
            };
        }
    }

    let mut state = match SimulationState::new(ctx) {
        Ok(state) => state,
        Err(e) => {
            events.push(ExecutionEvent {
                timestamp: ctx.clock.now(),
                level: EventLevel::Error,
                code: e.code(),
                detail: e.to_string(),
            });
            return SimulationRun {
                config_snapshot: snapshot,
                transcript: Transcript::new(),
                execution_log: events,
                metrics: None,
                status: RunStatus::Aborted { code: e.code() },
                wall_ms: 0,
            };
        }
    };

    state.log(
        EventLevel::Info,
        "run.start",
        format!(
            "sim_id={} name={} iterations={}",
            ctx.config.sim_id, ctx.config.simulation_name, ctx.config.iterations
        ),
    );

    let mut status = RunStatus::Ok;
    for _ in 0..ctx.config.iterations {
        if let Err(e) = state.step() {
            let code = e.code();
            state.log(EventLevel::Error, &code, e.to_string());
            status = RunStatus::Aborted { code };
            break;
        }
    }

    let wall_ms = (ctx.clock.now() - run_started).num_milliseconds().max(0) as u64;
    // on abort the error event stays the final log line
    if status.is_ok() {
        let turns = state.transcript().len();
        state.log(
            EventLevel::Info,
            "run.complete",
            format!("status=ok turns={turns} wall_ms={wall_ms}"),
        );
    }

    let SimulationState { transcript, events: log, .. } = state;
    SimulationRun {
        config_snapshot: snapshot,
        transcript,
        execution_log: log,
        metrics: None,
        status,
        wall_ms,
    }
}
