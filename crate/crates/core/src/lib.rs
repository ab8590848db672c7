//! Deterministic multi-agent dialogue simulation engine.
//!
//! JSON-defined LLM agents converse under configurable turn-taking, memory,
//! and tool policies; every run yields a transcript, execution log, canonical
//! config snapshot, and a five-score metrics report. Scripted and replay
//! backends make whole experiment batches reproducible byte for byte.

pub mod agent;
pub mod backend;
pub mod canonical;
pub mod cli;
pub mod clock;
pub mod experiment;
pub mod metrics;
pub mod orchestrator;
pub mod prompt;
pub mod reporting;
pub mod rng;
pub mod scenario;
pub mod schema;
pub mod tools;
pub mod transcript;

pub use agent::{
    canonicalize, parse_agent_definition, validate_agent_definition, AgentDefinition, AgentType,
    ParsedAgent, PromptTemplate, RoleCategory, SamplingParams, TemplateMessage, ToolGrants,
    Violation,
};
pub use backend::{
    fixture_key, record, BackendError, BackendKind, ChatBackend, ChatRequest, ChatResponse,
    FinishReason, HttpBackend, ReplayBackend, Script, ScriptedBackend,
};
pub use clock::{Clock, FixedClock, SystemClock};
pub use metrics::{
    builtin_stopwords, compute_metrics, compute_metrics_with, context_retention, diversity_score,
    normalize_text, sentiment_stability, unique_content_pct, MetricsReport, SentimentLexicon,
};
pub use orchestrator::{
    run_simulation, select_next_speaker, RunContext, RunStatus, SimulationConfig, SimulationRun,
    SpeakerSelection,
};
pub use prompt::{build_prompt, extract_variables, render_template, Bindings, RenderedMessage};
pub use scenario::{evaluate_objectives, load_scenario, parse_scenario, Scenario};
pub use schema::SchemaError;
pub use tools::{invoke_tool, parse_tool_directive, ToolCallDirective, ToolRegistry, ToolResult};
pub use transcript::{apply_memory_policy, MemoryPolicy, Message, Transcript};
