//! Command-line entry points: validate / run / batch / metrics / report /
//! record. stdout carries only machine-readable payloads (JSON or CSV);
//! diagnostics go to stderr.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime or backend error,
//! 3 usage error.

use crate::agent::{load_agent_definition, validate_agent_definition, AgentDefinition};
use crate::backend::{
    load_script, record, BackendKind, ChatBackend, HttpBackend, ReplayBackend, ScriptedBackend,
};
use crate::canonical::to_canonical_document;
use crate::clock::{Clock, FixedClock, SystemClock};
use crate::experiment::{
    emit_results_csv, emit_summary_json, load_matrix, BackendSpec, BatchOptions, ClockSpec,
};
use crate::metrics::{builtin_stopwords, compute_metrics_with, load_stopwords, SentimentLexicon};
use crate::orchestrator::{run_simulation, RunContext, SimulationConfig, SpeakerSelection};
use crate::prompt::Bindings;
use crate::reporting::{
    emit_html, emit_text, parse_text_transcript, persist_run, ReportOptions,
};
use crate::scenario::load_scenario;
use crate::tools::{load_stub_corpus, ToolRegistry};
use crate::transcript::MemoryPolicy;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "colloquy", version, about = "Deterministic multi-agent dialogue simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check agent, scenario, and experiment files; print violations
    Validate {
        /// Files to check, dispatched on extension (.agent.json,
        /// .scenario.json, .experiment.json)
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Execute one simulation and print its metrics JSON
    Run(Box<RunArgs>),
    /// Execute an experiment matrix and print the results CSV
    Batch(BatchArgs),
    /// Recompute metrics from a stored chat.txt
    Metrics(MetricsArgs),
    /// Regenerate HTML and text artifacts from a stored run directory
    Report(ReportArgs),
    /// Run live over HTTP while writing replay fixtures
    Record(Box<RunArgs>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Scripted,
    Replay,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    Alternate,
    Random,
    Directed,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Agent definition file; repeat to build the roster in order
    #[arg(long = "agent", value_name = "FILE", required = true)]
    pub agents: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value = "scripted")]
    pub backend: BackendArg,
    /// Script file for the scripted backend
    #[arg(long, value_name = "FILE")]
    pub script: Option<PathBuf>,
    /// Fixture directory (read by replay, written by record)
    #[arg(long, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible server
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token
    #[arg(long, value_name = "NAME", default_value = "COLLOQUY_API_TOKEN")]
    pub token_env: String,
    #[arg(long, default_value_t = 1)]
    pub sim_id: u64,
    #[arg(long, default_value = "run")]
    pub name: String,
    /// Model override; empty keeps each agent's own model
    #[arg(long, default_value = "")]
    pub model: String,
    #[arg(long, default_value_t = 10)]
    pub iterations: u32,
    #[arg(long, default_value_t = 0.7)]
    pub temperature: f64,
    #[arg(long, value_enum, default_value = "alternate")]
    pub selection: SelectionArg,
    /// Seed for random speaker selection
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directed-rule agent name; repeat to build the cycle
    #[arg(long = "rule", value_name = "AGENT")]
    pub rule: Vec<String>,
    /// Memory policy: "full" or "last:K"
    #[arg(long, default_value = "full")]
    pub memory: String,
    /// Append the elaboration request to every instruction
    #[arg(long)]
    pub elaborate: bool,
    #[arg(long, default_value_t = 3)]
    pub max_tool_calls: u32,
    /// Extra kickoff binding as key=value; repeatable
    #[arg(long = "seed-input", value_name = "KEY=VALUE")]
    pub seed_inputs: Vec<String>,
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    /// Stopword list override, one word per line
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
    /// Artifact directory for this run
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Fixed-clock epoch seconds for byte-reproducible artifacts
    #[arg(long, value_name = "EPOCH")]
    pub fixed_clock: Option<i64>,
    /// Stub search corpus file (JSON map query -> result)
    #[arg(long, value_name = "FILE")]
    pub tool_corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 600)]
    pub truncate: usize,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// Experiment matrix file (.experiment.json)
    pub matrix: PathBuf,
    /// Backend override; default comes from the matrix defaults
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long, value_name = "FILE")]
    pub script: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    #[arg(long, value_name = "NAME", default_value = "COLLOQUY_API_TOKEN")]
    pub token_env: String,
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_name = "EPOCH")]
    pub fixed_clock: Option<i64>,
    /// Worker threads; 0 = min(4, entries)
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, value_name = "FILE")]
    pub tool_corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 600)]
    pub truncate: usize,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Stored plain-text chat log
    #[arg(long, value_name = "FILE")]
    pub chat: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    /// Stopword list override, one word per line
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Stored run directory (config.snapshot.json + chat.txt)
    #[arg(long, value_name = "DIR")]
    pub run: PathBuf,
    /// Output directory; defaults to the run directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 600)]
    pub truncate: usize,
}

fn parse_memory(s: &str) -> Result<MemoryPolicy, String> {
    if s == "full" {
        return Ok(MemoryPolicy::Full);
    }
    if let Some(k) = s.strip_prefix("last:") {
        let k: usize = k.parse().map_err(|_| format!("bad memory window {s:?}"))?;
        if k == 0 {
            return Err("memory last:K requires K >= 1".into());
        }
        return Ok(MemoryPolicy::LastK { k });
    }
    Err(format!("bad --memory value {s:?}; expected \"full\" or \"last:K\""))
}

fn parse_seed_inputs(pairs: &[String]) -> Result<Bindings, String> {
    let mut out = Bindings::new();
    for pair in pairs {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| format!("bad --seed-input {pair:?}; expected KEY=VALUE"))?;
        out.insert(key.to_string(), value.to_string());
    }
    Ok(out)
}

fn load_lexicon(path: Option<&Path>) -> Result<SentimentLexicon, String> {
    match path {
        Some(p) => SentimentLexicon::load(p).map_err(|e| e.to_string()),
        None => Ok(SentimentLexicon::builtin()),
    }
}

fn load_stopword_set(
    path: Option<&Path>,
) -> Result<std::collections::BTreeSet<String>, String> {
    match path {
        Some(p) => load_stopwords(p).map_err(|e| e.to_string()),
        None => Ok(builtin_stopwords()),
    }
}

fn build_registry(corpus: Option<&Path>) -> Result<ToolRegistry, String> {
    let corpus = match corpus {
        Some(path) => load_stub_corpus(path).map_err(|e| e.to_string())?,
        None => BTreeMap::new(),
    };
    Ok(ToolRegistry::with_stub_search(corpus))
}

fn usage(msg: &str) -> i32 {
    eprintln!("usage error: {msg}");
    EXIT_USAGE
}

fn runtime(msg: &str) -> i32 {
    eprintln!("error: {msg}");
    EXIT_RUNTIME
}

pub fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::Validate { files } => cmd_validate(&files),
        Command::Run(args) => cmd_run(&args, false),
        Command::Record(args) => cmd_run(&args, true),
        Command::Batch(args) => cmd_batch(&args),
        Command::Metrics(args) => cmd_metrics(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

fn cmd_validate(files: &[PathBuf]) -> i32 {
    let mut failures = 0usize;
    for file in files {
        let name = file.display();
        let file_str = file.to_string_lossy();
        if file_str.ends_with(".agent.json") {
            match load_agent_definition(file) {
                Ok(parsed) => {
                    for violation in validate_agent_definition(&parsed.definition) {
                        eprintln!("{name}: {violation}");
                        failures += 1;
                    }
                }
                Err(e) => {
                    eprintln!("{name}: {e}");
                    failures += 1;
                }
            }
        } else if file_str.ends_with(".scenario.json") {
            if let Err(e) = load_scenario(file) {
                eprintln!("{name}: {e}");
                failures += 1;
            }
        } else if file_str.ends_with(".experiment.json") {
            if let Err(e) = load_matrix(file) {
                eprintln!("{name}: {e}");
                failures += 1;
            }
        } else {
            return usage(&format!(
                "{name}: unknown file kind; expected .agent.json, .scenario.json, or .experiment.json"
            ));
        }
    }
    if failures == 0 {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    }
}

struct LoadedRoster {
    agents: BTreeMap<String, AgentDefinition>,
    roster: Vec<String>,
}

fn load_roster(paths: &[PathBuf]) -> Result<LoadedRoster, i32> {
    let mut agents = BTreeMap::new();
    let mut roster = Vec::new();
    let mut violations = 0usize;
    for path in paths {
        match load_agent_definition(path) {
            Ok(parsed) => {
                for warning in &parsed.warnings {
                    eprintln!("{}: warning: {warning}", path.display());
                }
                let list = validate_agent_definition(&parsed.definition);
                for violation in &list {
                    eprintln!("{}: {violation}", path.display());
                }
                violations += list.len();
                roster.push(parsed.definition.agent_name.clone());
                agents.insert(parsed.definition.agent_name.clone(), parsed.definition);
            }
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                violations += 1;
            }
        }
    }
    if violations > 0 {
        return Err(EXIT_VALIDATION);
    }
    Ok(LoadedRoster { agents, roster })
}

fn cmd_run(args: &RunArgs, recording: bool) -> i32 {
    let roster = match load_roster(&args.agents) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let scenario = match load_scenario(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", args.scenario.display());
            return EXIT_VALIDATION;
        }
    };
    let memory = match parse_memory(&args.memory) {
        Ok(m) => m,
        Err(e) => return usage(&e),
    };
    let seed_inputs = match parse_seed_inputs(&args.seed_inputs) {
        Ok(b) => b,
        Err(e) => return usage(&e),
    };
    let selection = match args.selection {
        SelectionArg::Alternate => SpeakerSelection::Alternate,
        SelectionArg::Random => SpeakerSelection::SeededRandom { seed: args.seed.unwrap_or(0) },
        SelectionArg::Directed => {
            if args.rule.is_empty() {
                return usage("--selection directed requires at least one --rule");
            }
            SpeakerSelection::Directed { rule: args.rule.clone() }
        }
    };

    let backend: Box<dyn ChatBackend> = if recording {
        let Some(endpoint) = &args.endpoint else {
            return usage("record requires --endpoint");
        };
        let Some(fixtures) = &args.fixtures else {
            return usage("record requires --fixtures");
        };
        let http = HttpBackend::new(endpoint, &args.token_env);
        Box::new(record(Box::new(http), fixtures))
    } else {
        let kind = match args.backend {
            BackendArg::Scripted => {
                let Some(script_path) = &args.script else {
                    return usage("--backend scripted requires --script");
                };
                match load_script(script_path) {
                    Ok(script) => BackendKind::Scripted { script },
                    Err(e) => {
                        eprintln!("{}: {e}", script_path.display());
                        return EXIT_VALIDATION;
                    }
                }
            }
            BackendArg::Replay => {
                let Some(fixtures) = &args.fixtures else {
                    return usage("--backend replay requires --fixtures");
                };
                BackendKind::Replay { fixture_dir: fixtures.clone() }
            }
            BackendArg::Http => {
                let Some(endpoint) = &args.endpoint else {
                    return usage("--backend http requires --endpoint");
                };
                BackendKind::RemoteHttp {
                    endpoint: endpoint.clone(),
                    token_env: args.token_env.clone(),
                }
            }
        };
        kind.build()
    };

    let registry = match build_registry(args.tool_corpus.as_deref()) {
        Ok(r) => r,
        Err(e) => return runtime(&e),
    };
    let lexicon = match load_lexicon(args.lexicon.as_deref()) {
        Ok(l) => l,
        Err(e) => return runtime(&e),
    };
    let stopwords = match load_stopword_set(args.stopwords.as_deref()) {
        Ok(s) => s,
        Err(e) => return runtime(&e),
    };

    let config = SimulationConfig {
        sim_id: args.sim_id,
        simulation_name: args.name.clone(),
        model_type: args.model.clone(),
        iterations: args.iterations,
        temperature: args.temperature,
        agents_involved: roster.roster.clone(),
        selection,
        memory,
        elaboration_enabled: args.elaborate,
        seed_inputs,
        max_tool_calls: args.max_tool_calls,
        notes: String::new(),
    };

    let clock: Box<dyn Clock> = match args.fixed_clock {
        Some(epoch) => Box::new(FixedClock::new(epoch)),
        None => Box::new(SystemClock),
    };
    let ctx = RunContext {
        config: &config,
        agents: &roster.agents,
        scenario: &scenario,
        backend: backend.as_ref(),
        tools: &registry,
        clock: clock.as_ref(),
    };
    let mut run = run_simulation(&ctx, args.out.as_deref());
    if run.status.is_ok() {
        run.metrics = compute_metrics_with(&run.transcript, &scenario, &lexicon, &stopwords).ok();
    }
    let report_options = ReportOptions { truncate_chars: args.truncate, ..Default::default() };
    if let Some(out) = &args.out {
        if let Err(e) = persist_run(&run, out, &report_options) {
            return runtime(&format!("failed to write artifacts: {e}"));
        }
    }
    match (&run.status, &run.metrics) {
        (s, Some(metrics)) if s.is_ok() => {
            print!("{}", to_canonical_document(&metrics.to_json_value()));
            EXIT_OK
        }
        (s, None) if s.is_ok() => runtime("run succeeded but metrics could not be computed"),
        _ => {
            let detail = run
                .execution_log
                .iter()
                .rev()
                .find(|e| e.code != "run.complete")
                .map(|e| format!("{} {}", e.code, e.detail))
                .unwrap_or_default();
            runtime(&format!("run aborted: {detail}"))
        }
    }
}

fn cmd_batch(args: &BatchArgs) -> i32 {
    let experiment = match load_matrix(&args.matrix) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("{}: {e}", args.matrix.display());
            return EXIT_VALIDATION;
        }
    };

    let spec = match args.backend {
        Some(BackendArg::Scripted) => {
            let Some(script) = args.script.clone().or_else(|| match &experiment.backend {
                Some(BackendSpec::Scripted { script }) => Some(script.clone()),
                _ => None,
            }) else {
                return usage("--backend scripted requires --script (or matrix defaults.backend)");
            };
            BackendSpec::Scripted { script }
        }
        Some(BackendArg::Replay) => {
            let Some(fixtures) = &args.fixtures else {
                return usage("--backend replay requires --fixtures");
            };
            BackendSpec::Replay { fixture_dir: fixtures.clone() }
        }
        Some(BackendArg::Http) => {
            let Some(endpoint) = &args.endpoint else {
                return usage("--backend http requires --endpoint");
            };
            BackendSpec::RemoteHttp {
                endpoint: endpoint.clone(),
                token_env: args.token_env.clone(),
            }
        }
        None => match &experiment.backend {
            Some(spec) => spec.clone(),
            None => return usage("no backend: pass --backend or set defaults.backend in the matrix"),
        },
    };

    let script = match &spec {
        BackendSpec::Scripted { script } => match load_script(script) {
            Ok(s) => Some(s),
            Err(e) => {
                eprintln!("{}: {e}", script.display());
                return EXIT_VALIDATION;
            }
        },
        _ => None,
    };
    let factory = |_config: &SimulationConfig| -> Box<dyn ChatBackend> {
        match &spec {
            BackendSpec::Scripted { .. } => {
                Box::new(ScriptedBackend::new(script.clone().expect("script loaded")))
            }
            BackendSpec::Replay { fixture_dir } => Box::new(ReplayBackend::new(fixture_dir.clone())),
            BackendSpec::RemoteHttp { endpoint, token_env } => {
                Box::new(HttpBackend::new(endpoint, token_env))
            }
        }
    };

    let registry = match build_registry(args.tool_corpus.as_deref()) {
        Ok(r) => r,
        Err(e) => return runtime(&e),
    };
    let options = BatchOptions {
        out_dir: Some(args.out.clone()),
        clock: match args.fixed_clock {
            Some(epoch) => ClockSpec::Fixed { epoch_secs: epoch },
            None => ClockSpec::System,
        },
        workers: args.workers,
        report: ReportOptions { truncate_chars: args.truncate, ..Default::default() },
    };

    let table = crate::experiment::run_matrix(&experiment, &factory, &registry, &options);
    let csv = emit_results_csv(&table);
    let summary = emit_summary_json(&table);
    if let Err(e) = std::fs::create_dir_all(&args.out)
        .and_then(|_| std::fs::write(args.out.join("results.csv"), csv.as_bytes()))
        .and_then(|_| std::fs::write(args.out.join("summary.json"), summary.as_bytes()))
    {
        return runtime(&format!("failed to write batch outputs: {e}"));
    }
    print!("{csv}");
    EXIT_OK
}

fn cmd_metrics(args: &MetricsArgs) -> i32 {
    let text = match std::fs::read_to_string(&args.chat) {
        Ok(t) => t,
        Err(e) => return runtime(&format!("{}: {e}", args.chat.display())),
    };
    let transcript = match parse_text_transcript(&text) {
        Ok(t) => t,
        Err(e) => return runtime(&format!("{}: {e}", args.chat.display())),
    };
    let scenario = match load_scenario(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", args.scenario.display());
            return EXIT_VALIDATION;
        }
    };
    let lexicon = match load_lexicon(args.lexicon.as_deref()) {
        Ok(l) => l,
        Err(e) => return runtime(&e),
    };
    let stopwords = match load_stopword_set(args.stopwords.as_deref()) {
        Ok(s) => s,
        Err(e) => return runtime(&e),
    };
    match compute_metrics_with(&transcript, &scenario, &lexicon, &stopwords) {
        Ok(report) => {
            print!("{}", to_canonical_document(&report.to_json_value()));
            EXIT_OK
        }
        Err(e) => runtime(&e.to_string()),
    }
}

fn cmd_report(args: &ReportArgs) -> i32 {
    let snapshot_path = args.run.join("config.snapshot.json");
    let chat_path = args.run.join("chat.txt");
    let snapshot = match std::fs::read_to_string(&snapshot_path) {
        Ok(s) => s,
        Err(e) => return runtime(&format!("{}: {e}", snapshot_path.display())),
    };
    let text = match std::fs::read_to_string(&chat_path) {
        Ok(t) => t,
        Err(e) => return runtime(&format!("{}: {e}", chat_path.display())),
    };
    let transcript = match parse_text_transcript(&text) {
        Ok(t) => t,
        Err(e) => return runtime(&format!("{}: {e}", chat_path.display())),
    };
    let run = crate::orchestrator::SimulationRun {
        config_snapshot: snapshot,
        transcript,
        execution_log: Vec::new(),
        metrics: None,
        status: crate::orchestrator::RunStatus::Ok,
        wall_ms: 0,
    };
    let options = ReportOptions { truncate_chars: args.truncate, ..Default::default() };
    let out = args.out.clone().unwrap_or_else(|| args.run.clone());
    if let Err(e) = std::fs::create_dir_all(&out)
        .and_then(|_| std::fs::write(out.join("chat.html"), emit_html(&run, &options)))
        .and_then(|_| std::fs::write(out.join("chat.txt"), emit_text(&run)))
    {
        return runtime(&format!("failed to write report: {e}"));
    }
    EXIT_OK
}
