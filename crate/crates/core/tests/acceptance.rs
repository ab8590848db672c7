//! Acceptance suite: one test per criterion, each printing its own pass/fail
//! line through the harness and enforcing its runtime budget.

mod support;

use colloquy::agent::{
    canonicalize, parse_agent_definition, validate_agent_definition, AgentType,
};
use colloquy::backend::{record, fixture_key, ChatRequest, HttpBackend, ReplayBackend, Script, ScriptedBackend};
use colloquy::clock::{Clock, FixedClock};
use colloquy::experiment::{
    emit_results_csv, load_matrix, run_matrix, BackendSpec, BatchOptions, ClockSpec,
    LoadedExperiment, RESULTS_CSV_HEADER,
};
use colloquy::metrics::{
    context_retention, diversity_score, sentiment_stability, unique_content_pct,
    SentimentLexicon, STOPWORDS,
};
use colloquy::orchestrator::{
    run_simulation, select_next_speaker, RunContext, SimulationConfig, SpeakerSelection,
};
use colloquy::prompt::{render_template, Bindings};
use colloquy::reporting::emit_text;
use colloquy::scenario::{evaluate_objectives, ObjectiveSpec, SafePhase, Scenario};
use colloquy::tools::{invoke_tool, ToolCallDirective, ToolRegistry};
use colloquy::transcript::{apply_memory_policy, MemoryPolicy, Message, Transcript};
use std::collections::BTreeMap;
use std::time::{Duration, Instant};
use support::{assets_dir, test_agent, test_agents, test_config, test_scenario, transcript_of};

fn assert_within(budget: Duration, started: Instant, what: &str) {
    let elapsed = started.elapsed();
    assert!(elapsed < budget, "{what} took {elapsed:?}, budget {budget:?}");
}

// ---------------------------------------------------------------------------
// Criterion 1: schema fidelity of the bundled example agent document.
// ---------------------------------------------------------------------------
#[test]
fn criterion_1_schema_fidelity() {
    let started = Instant::now();
    let raw = std::fs::read_to_string(
        assets_dir().join("agents/product_management_alex.agent.json"),
    )
    .expect("bundled agent example");

    let parsed = parse_agent_definition(&raw).expect("parses");
    let def = &parsed.definition;
    assert_eq!(def.agent_name, "Product Management Agent—Alex");
    assert_eq!(def.llm.model_name, "gpt-3.5-turbo");
    assert_eq!(def.llm.temperature, 0.0);
    assert_eq!(def.llm.max_tokens, None);
    assert_eq!(def.tools.allowed_external_tools, ["TavilySearchResults"]);
    assert!(def.tools.allowed_basic_tools.is_empty());
    assert_eq!(def.agent_type, AgentType::DialogueAgentWithTools);
    assert_eq!(def.return_values, ["output"]);
    assert_eq!(def.prompt.input_variables.len(), 3);

    assert_eq!(validate_agent_definition(def), vec![], "zero violations");

    let canon = canonicalize(def);
    let reparsed = parse_agent_definition(&canon).expect("canonical form parses");
    assert_eq!(reparsed.definition, *def, "round-trip preserves structure");
    let canon2 = canonicalize(&reparsed.definition);
    assert_eq!(canon, canon2, "canonicalize is a byte-stable fixpoint");

    assert_within(Duration::from_secs(1), started, "criterion 1");
}

// ---------------------------------------------------------------------------
// Criterion 2: turn-taking.
// ---------------------------------------------------------------------------
#[test]
fn criterion_2_turn_taking() {
    let started = Instant::now();

    // Alternate over 2 agents for 10 iterations: strict PM/Architect pattern.
    let pm = "Product Management—Alex";
    let sa = "System Architect—John";
    let config = {
        let mut c = test_config(&[pm, sa], 10);
        c.simulation_name = "Baseline simulation".into();
        c
    };
    let agents = test_agents(&[pm, sa]);
    let pm_lines: Vec<String> = (0..5).map(|i| format!("pm line {i}")).collect();
    let sa_lines: Vec<String> = (0..5).map(|i| format!("sa line {i}")).collect();
    let backend = ScriptedBackend::new(Script::from_replies(&[
        (pm, &pm_lines.iter().map(String::as_str).collect::<Vec<_>>()),
        (sa, &sa_lines.iter().map(String::as_str).collect::<Vec<_>>()),
    ]));
    let tools = ToolRegistry::new();
    let clock = FixedClock::new(0);
    let scenario = test_scenario();
    let ctx = RunContext {
        config: &config,
        agents: &agents,
        scenario: &scenario,
        backend: &backend,
        tools: &tools,
        clock: &clock,
    };
    let run = run_simulation(&ctx, None);
    assert!(run.status.is_ok());
    assert_eq!(run.transcript.len(), 10);
    for (i, msg) in run.transcript.iter().enumerate() {
        let expected = if i % 2 == 0 { pm } else { sa };
        assert_eq!(msg.agent_name, expected, "strict alternation at turn {i}");
    }

    // SeededRandom(42) over a roster of 3 reproduces the frozen golden
    // sequence and never repeats a speaker consecutively.
    let roster: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
    let selection = SpeakerSelection::SeededRandom { seed: 42 };
    let clock = FixedClock::new(0);
    let mut transcript = Transcript::new();
    let mut picks = Vec::new();
    for step in 0..10 {
        let pick = select_next_speaker(&selection, step, &roster, &transcript).unwrap();
        picks.push(pick);
        transcript.push(Message::new(step, &roster[pick], "x", clock.now()));
    }
    assert_eq!(picks, [1, 2, 0, 1, 0, 1, 2, 0, 2, 0], "frozen golden sequence");

    for step in 10..100 {
        let pick = select_next_speaker(&selection, step, &roster, &transcript).unwrap();
        let prev = transcript.last().unwrap().agent_name.clone();
        assert_ne!(roster[pick], prev, "no consecutive repeat at step {step}");
        transcript.push(Message::new(step, &roster[pick], "x", clock.now()));
    }

    assert_within(Duration::from_secs(1), started, "criterion 2");
}

// ---------------------------------------------------------------------------
// Criterion 3: metric oracle equivalence over an exhaustive small corpus and
// randomized larger cases.
// ---------------------------------------------------------------------------

/// Brute-force reimplementations, deliberately naive and set-free so they
/// share no code path with the metrics module.
mod oracle {
    pub fn tokens(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut current = String::new();
        for c in text.chars() {
            if c.is_alphanumeric() {
                for lower in c.to_lowercase() {
                    current.push(lower);
                }
            } else if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
        out
    }

    pub fn unique_pct(messages: &[String]) -> f64 {
        let normalized: Vec<Vec<String>> = messages.iter().map(|m| tokens(m)).collect();
        let mut distinct = 0usize;
        for (i, m) in normalized.iter().enumerate() {
            if !normalized[..i].contains(m) {
                distinct += 1;
            }
        }
        100.0 * distinct as f64 / messages.len() as f64
    }

    pub fn diversity(messages: &[String]) -> Option<f64> {
        let mut all: Vec<String> = Vec::new();
        for m in messages {
            all.extend(tokens(m));
        }
        if all.is_empty() {
            return None;
        }
        let mut distinct = 0usize;
        for (i, t) in all.iter().enumerate() {
            if !all[..i].contains(t) {
                distinct += 1;
            }
        }
        Some(distinct as f64 / all.len() as f64)
    }

    fn class(message: &str, positive: &[String], negative: &[String]) -> i8 {
        let mut pos = 0i64;
        let mut neg = 0i64;
        for t in tokens(message) {
            if positive.contains(&t) {
                pos += 1;
            }
            if negative.contains(&t) {
                neg += 1;
            }
        }
        match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => -1,
            std::cmp::Ordering::Equal => 0,
        }
    }

    pub fn stability(messages: &[String], positive: &[String], negative: &[String]) -> f64 {
        if messages.len() <= 1 {
            return 100.0;
        }
        let classes: Vec<i8> =
            messages.iter().map(|m| class(m, positive, negative)).collect();
        let mut stable = 0usize;
        for i in 1..classes.len() {
            if classes[i] == classes[i - 1] {
                stable += 1;
            }
        }
        100.0 * stable as f64 / (classes.len() - 1) as f64
    }

    pub fn retention(messages: &[String], stopwords: &[&str]) -> f64 {
        if messages.len() <= 1 {
            return 100.0;
        }
        let content: Vec<Vec<String>> = messages
            .iter()
            .map(|m| {
                tokens(m)
                    .into_iter()
                    .filter(|t| !stopwords.contains(&t.as_str()))
                    .collect()
            })
            .collect();
        let mut retained = 0usize;
        for i in 1..content.len() {
            let mut hit = false;
            for token in &content[i] {
                for earlier in &content[..i] {
                    if earlier.contains(token) {
                        hit = true;
                    }
                }
            }
            if hit {
                retained += 1;
            }
        }
        100.0 * retained as f64 / (messages.len() - 1) as f64
    }

    pub fn completion(messages: &[String], objectives: &[Vec<String>]) -> f64 {
        let mut met = 0usize;
        for patterns in objectives {
            let mut hit = false;
            for pattern in patterns {
                for message in messages {
                    if message.to_lowercase().contains(&pattern.to_lowercase()) {
                        hit = true;
                    }
                }
            }
            if hit {
                met += 1;
            }
        }
        100.0 * met as f64 / objectives.len() as f64
    }
}

fn oracle_scenario() -> (Scenario, Vec<Vec<String>>) {
    let patterns: Vec<Vec<String>> = vec![
        vec!["alpha".into()],
        vec!["risk".into()],
        vec!["gamma".into()],
        vec!["never zzz".into()],
    ];
    let scenario = Scenario {
        name: "oracle".into(),
        phase: SafePhase::PiPlanning,
        seed_inputs: Bindings::new(),
        kickoff_instruction: "go".into(),
        objectives: patterns
            .iter()
            .enumerate()
            .map(|(i, p)| ObjectiveSpec {
                id: format!("o{i}"),
                description: String::new(),
                match_patterns: p.clone(),
            })
            .collect(),
    };
    (scenario, patterns)
}

fn check_all_metrics_against_oracles(
    messages: &[String],
    scenario: &Scenario,
    patterns: &[Vec<String>],
    lexicon: &SentimentLexicon,
    pos: &[String],
    neg: &[String],
) {
    let refs: Vec<&str> = messages.iter().map(String::as_str).collect();
    let transcript = transcript_of(&refs);
    const TOL: f64 = 1e-9;

    let got = unique_content_pct(&transcript).unwrap();
    let want = oracle::unique_pct(messages);
    assert!((got - want).abs() <= TOL, "unique: got {got}, oracle {want}, msgs {messages:?}");

    match (diversity_score(&transcript), oracle::diversity(messages)) {
        (Ok(got), Some(want)) => {
            assert!((got - want).abs() <= TOL, "diversity: got {got}, oracle {want}");
        }
        (Err(_), None) => {}
        (got, want) => panic!("diversity disagreement: impl {got:?}, oracle {want:?}"),
    }

    let got = sentiment_stability(&transcript, lexicon);
    let want = oracle::stability(messages, pos, neg);
    assert!((got - want).abs() <= TOL, "stability: got {got}, oracle {want}, msgs {messages:?}");

    let got = context_retention(&transcript);
    let want = oracle::retention(messages, &STOPWORDS);
    assert!((got - want).abs() <= TOL, "retention: got {got}, oracle {want}, msgs {messages:?}");

    let got = 100.0 * evaluate_objectives(scenario, &transcript);
    let want = oracle::completion(messages, patterns);
    assert!((got - want).abs() <= TOL, "completion: got {got}, oracle {want}");
}

#[test]
fn criterion_3_metric_oracle_equivalence() {
    let started = Instant::now();
    let lexicon = SentimentLexicon::builtin();
    let pos: Vec<String> = lexicon.positive.iter().cloned().collect();
    let neg: Vec<String> = lexicon.negative.iter().cloned().collect();
    let (scenario, patterns) = oracle_scenario();

    // Exhaustive corpus: every transcript of length 1..=6 over a fixed pool
    // of 6 messages built from an 8-token vocabulary. 6 + 6^2 + ... + 6^6 =
    // 55,986 cases.
    let pool: [&str; 6] = [
        "alpha beta",
        "good plan",
        "bad risk",
        "the alpha",
        "gamma",
        "good bad plan",
    ];
    let mut cases = 0usize;
    for len in 1..=6usize {
        let total = pool.len().pow(len as u32);
        for mut index in 0..total {
            let mut messages = Vec::with_capacity(len);
            for _ in 0..len {
                messages.push(pool[index % pool.len()].to_string());
                index /= pool.len();
            }
            check_all_metrics_against_oracles(&messages, &scenario, &patterns, &lexicon, &pos, &neg);
            cases += 1;
        }
    }
    assert!(cases >= 10_000, "exhaustive corpus has {cases} cases");

    // 1,000 randomized larger cases over a broader vocabulary.
    let vocab: [&str; 20] = [
        "alpha", "beta", "gamma", "delta", "risk", "good", "bad", "great", "fail", "the",
        "and", "plan", "road", "map", "team", "story", "demo", "progress", "blocked", "2x",
    ];
    let mut rng = colloquy::rng::SplitMix64::new(0xACCE);
    for _ in 0..1_000 {
        let message_count = 1 + (rng.next_u64() % 30) as usize;
        let mut messages = Vec::with_capacity(message_count);
        for _ in 0..message_count {
            let token_count = 1 + (rng.next_u64() % 12) as usize;
            let words: Vec<&str> = (0..token_count)
                .map(|_| vocab[(rng.next_u64() % vocab.len() as u64) as usize])
                .collect();
            messages.push(words.join(" "));
        }
        check_all_metrics_against_oracles(&messages, &scenario, &patterns, &lexicon, &pos, &neg);
    }

    assert_within(Duration::from_secs(60), started, "criterion 3");
}

// ---------------------------------------------------------------------------
// Criterion 4: reconstruction of the observed result-table value patterns,
// exact at 2 decimals.
// ---------------------------------------------------------------------------
#[test]
fn criterion_4_value_pattern_reconstruction() {
    let lexicon = SentimentLexicon::builtin();

    // 9 identical messages -> unique content 11.11
    let t = transcript_of(&["the same update"; 9]);
    assert_eq!(format!("{:.2}", unique_content_pct(&t).unwrap()), "11.11");

    // sentiment classes [pos, pos, neg, neutral] -> stability 33.33
    let t = transcript_of(&["good", "great work", "bad risk", "the meeting happened"]);
    assert_eq!(format!("{:.2}", sentiment_stability(&t, &lexicon)), "33.33");

    // alternating classes -> 0.00
    let t = transcript_of(&["good", "bad", "good", "bad", "good", "bad"]);
    assert_eq!(format!("{:.2}", sentiment_stability(&t, &lexicon)), "0.00");

    // uniform classes -> 100.00
    let t = transcript_of(&["good news", "great progress", "excellent work", "happy to agree"]);
    assert_eq!(format!("{:.2}", sentiment_stability(&t, &lexicon)), "100.00");

    // 2 of 4 objectives met -> completion 50.00
    let scenario = Scenario {
        name: "patterns".into(),
        phase: SafePhase::PiPlanning,
        seed_inputs: Bindings::new(),
        kickoff_instruction: "go".into(),
        objectives: [
            ("a", "road map"),
            ("b", "budget sign-off"),
            ("c", "risk"),
            ("d", "hiring plan"),
        ]
        .iter()
        .map(|(id, pattern)| ObjectiveSpec {
            id: id.to_string(),
            description: String::new(),
            match_patterns: vec![pattern.to_string()],
        })
        .collect(),
    };
    let t = transcript_of(&["here is the road map", "one open risk remains"]);
    assert_eq!(format!("{:.2}", 100.0 * evaluate_objectives(&scenario, &t)), "50.00");
}

// ---------------------------------------------------------------------------
// Criterion 5: deterministic end-to-end batch over the bundled matrix.
// ---------------------------------------------------------------------------
fn run_bundled_batch(out: &std::path::Path) -> String {
    let experiment = load_matrix(&assets_dir().join("table6.experiment.json")).expect("matrix");
    let script = match &experiment.backend {
        Some(BackendSpec::Scripted { script }) => {
            colloquy::backend::load_script(script).expect("bundled script")
        }
        other => panic!("bundled matrix must default to the scripted backend, got {other:?}"),
    };
    let factory = move |_: &SimulationConfig| -> Box<dyn colloquy::backend::ChatBackend> {
        Box::new(ScriptedBackend::new(script.clone()))
    };
    let tools = ToolRegistry::with_stub_search(BTreeMap::new());
    let options = BatchOptions {
        out_dir: Some(out.to_path_buf()),
        clock: ClockSpec::Fixed { epoch_secs: 1_700_000_000 },
        workers: 0,
        report: Default::default(),
    };
    let table = run_matrix(&experiment, &factory, &tools, &options);
    assert_eq!(table.rows.len(), 6);
    for row in &table.rows {
        assert_eq!(row.status, "ok", "sim {} must succeed", row.sim_id);
        assert!(row.metrics.is_some());
    }
    emit_results_csv(&table)
}

fn collect_files(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().to_string();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn criterion_5_deterministic_batch() {
    let started = Instant::now();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();

    let csv_a = run_bundled_batch(dir_a.path());
    let csv_b = run_bundled_batch(dir_b.path());

    let header = csv_a.lines().next().unwrap();
    assert_eq!(header, RESULTS_CSV_HEADER, "exact column schema");
    assert_eq!(csv_a.lines().count(), 7, "header plus six rows");
    assert_eq!(csv_a, csv_b, "CSV byte-identical across executions");

    let files_a = collect_files(dir_a.path());
    let files_b = collect_files(dir_b.path());
    assert_eq!(
        files_a.keys().collect::<Vec<_>>(),
        files_b.keys().collect::<Vec<_>>(),
        "artifact sets match"
    );
    for sim in 1..=6 {
        for artifact in ["chat.html", "chat.txt", "execution.log", "config.snapshot.json", "metrics.json"] {
            let key = format!("{sim}/{artifact}");
            assert!(files_a.contains_key(&key), "missing artifact {key}");
        }
    }
    for (name, bytes) in &files_a {
        assert_eq!(bytes, &files_b[name], "artifact {name} differs between executions");
    }

    assert_within(Duration::from_secs(10), started, "criterion 5");
}

// ---------------------------------------------------------------------------
// Criterion 6: record against the bundled stub server, then replay from
// fixtures with the network gone.
// ---------------------------------------------------------------------------
#[test]
fn criterion_6_record_replay() {
    let started = Instant::now();
    let fixtures = tempfile::tempdir().unwrap();
    let agents = test_agents(&["PM", "SA"]);
    let scenario = test_scenario();
    let tools = ToolRegistry::new();
    let config = test_config(&["PM", "SA"], 4);

    let recorded = {
        let server = support::StubServer::start();
        let http = HttpBackend::new(&server.endpoint(), "COLLOQUY_ACCEPTANCE_TOKEN");
        let recorder = record(Box::new(http), fixtures.path());
        let clock = FixedClock::new(42);
        let ctx = RunContext {
            config: &config,
            agents: &agents,
            scenario: &scenario,
            backend: &recorder,
            tools: &tools,
            clock: &clock,
        };
        let run = run_simulation(&ctx, None);
        assert!(run.status.is_ok(), "recorded run failed: {:?}", run.execution_log);
        server.stop(); // network disabled from here on
        run
    };

    let replayed = {
        let replay = ReplayBackend::new(fixtures.path().to_path_buf());
        let clock = FixedClock::new(42);
        let ctx = RunContext {
            config: &config,
            agents: &agents,
            scenario: &scenario,
            backend: &replay,
            tools: &tools,
            clock: &clock,
        };
        let run = run_simulation(&ctx, None);
        assert!(run.status.is_ok(), "replayed run failed: {:?}", run.execution_log);
        run
    };

    assert_eq!(recorded.transcript, replayed.transcript, "transcripts identical");
    assert_eq!(
        emit_text(&recorded),
        emit_text(&replayed),
        "text artifacts byte-identical"
    );
    assert_eq!(
        recorded.config_snapshot, replayed.config_snapshot,
        "snapshots byte-identical"
    );

    assert_within(Duration::from_secs(5), started, "criterion 6");
}

// ---------------------------------------------------------------------------
// Criterion 7: tool loop behavior.
// ---------------------------------------------------------------------------
#[test]
fn criterion_7_tool_loop() {
    let started = Instant::now();

    // One search directive -> tool_trace length 1.
    let config = test_config(&["PM", "SA"], 1);
    let mut agents = test_agents(&["SA"]);
    agents.insert("PM".into(), test_agent("PM", true));
    let backend = ScriptedBackend::new(Script::from_replies(&[(
        "PM",
        &[r#"Checking. <<tool:search {"q":"latency budget"}>>"#, "Found it; proceeding."],
    )]));
    let tools = ToolRegistry::with_stub_search(BTreeMap::new());
    let clock = FixedClock::new(0);
    let scenario = test_scenario();
    let ctx = RunContext {
        config: &config,
        agents: &agents,
        scenario: &scenario,
        backend: &backend,
        tools: &tools,
        clock: &clock,
    };
    let run = run_simulation(&ctx, None);
    assert!(run.status.is_ok());
    assert_eq!(run.transcript.as_slice()[0].tool_trace.len(), 1);

    // Grants enforcement rejects an ungranted tool.
    let ungranted = test_agent("NoTools", false);
    let directive = ToolCallDirective {
        tool_name: "search".into(),
        args: BTreeMap::new(),
    };
    assert_eq!(
        invoke_tool(&tools, &ungranted.tools, &directive),
        Err(colloquy::tools::ToolError::ToolNotGranted { name: "search".into() })
    );

    // The loop bound terminates a pathological always-calling script with a
    // warning event.
    let always = r#"<<tool:search {"q":"again"}>>"#;
    let backend = ScriptedBackend::new(Script::from_replies(&[(
        "PM",
        &[always, always, always, always, always],
    )]));
    let ctx = RunContext {
        config: &config,
        agents: &agents,
        scenario: &scenario,
        backend: &backend,
        tools: &tools,
        clock: &clock,
    };
    let run = run_simulation(&ctx, None);
    assert!(run.status.is_ok(), "bounded loop must terminate the turn cleanly");
    assert_eq!(run.transcript.as_slice()[0].tool_trace.len(), 3, "max_tool_calls=3");
    assert!(run
        .execution_log
        .iter()
        .any(|e| e.code == "tools.loop_bound"
            && e.level == colloquy::orchestrator::EventLevel::Warning));

    assert_within(Duration::from_secs(1), started, "criterion 7");
}

// ---------------------------------------------------------------------------
// Criterion 8: invariant suite, >= 1000 generated cases per property.
// ---------------------------------------------------------------------------
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};

const CASES: u32 = 1000;

fn runner() -> TestRunner {
    TestRunner::new(PtConfig { cases: CASES, ..PtConfig::default() })
}

fn arb_ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}"
}

fn arb_agent_doc() -> impl Strategy<Value = serde_json::Value> {
    (
        proptest::collection::btree_set(arb_ident(), 1..4),
        "[A-Za-z][A-Za-z0-9 _-]{0,14}",
        0.0..=1.0f64,
        -2.0..=2.0f64,
        -2.0..=2.0f64,
        proptest::option::of(1u64..2048),
        proptest::collection::btree_set("[a-z]{1,6}", 0..3),
        any::<u8>(),
    )
        .prop_map(|(vars, name, temperature, pp, fp, max_tokens, ext, flags)| {
            let vars: Vec<String> = vars.into_iter().collect();
            let ext: Vec<String> = ext.into_iter().collect();
            let first = &vars[0];
            let last = &vars[vars.len() - 1];
            let mut msgs = vec![serde_json::json!({
                "role": "system",
                "content": format!("Role uses {{{last}}} and a {{{{literal}}}} brace.")
            })];
            if flags & 1 != 0 {
                msgs.push(serde_json::json!({
                    "role": "user",
                    "content": format!("Context: {{{first}}}.")
                }));
            }
            msgs.push(serde_json::json!({"role": "placeholder", "content": first}));
            let agent_type =
                if ext.is_empty() { "dialogue_agent" } else { "dialogue_agent_with_tools" };
            let role = ["manager", "executor", "quality_checker", "methodology_reviewer"]
                [(flags % 4) as usize];
            serde_json::json!({
                "agent_name": name,
                "role_category": role,
                "prompt": {
                    "input_variables": vars,
                    "template_messages": msgs,
                    "template_format": "f-string"
                },
                "llm": {
                    "model_name": "gpt-3.5-turbo",
                    "temperature": temperature,
                    "max_tokens": max_tokens,
                    "presence_penalty": pp,
                    "frequency_penalty": fp
                },
                "tools": {"allowed_basic_tools": [], "allowed_external_tools": ext},
                "return_values": ["output"],
                "agent_type": agent_type
            })
        })
}

fn vocab_message() -> impl Strategy<Value = String> {
    let vocab = ["alpha", "beta", "gamma", "risk", "good", "bad", "the", "plan", "demo"];
    proptest::collection::vec(0..vocab.len(), 1..8)
        .prop_map(move |idx| idx.into_iter().map(|i| vocab[i]).collect::<Vec<_>>().join(" "))
}

#[test]
fn criterion_8_invariant_suite() {
    let started = Instant::now();
    let lexicon = SentimentLexicon::builtin();

    // Round-trip: parse(canonicalize(d)) == d for generated valid definitions,
    // and canonicalization is deterministic plus a validation fixpoint.
    runner()
        .run(&arb_agent_doc(), |doc| {
            let def = parse_agent_definition(&doc.to_string()).unwrap().definition;
            prop_assert_eq!(validate_agent_definition(&def), vec![]);
            let canon = canonicalize(&def);
            prop_assert_eq!(&canon, &canonicalize(&def.clone()), "pure function");
            let reparsed = parse_agent_definition(&canon).unwrap().definition;
            prop_assert_eq!(&reparsed, &def);
            prop_assert_eq!(canonicalize(&reparsed), canon, "fixpoint");
            Ok(())
        })
        .unwrap();

    // Validation completeness: a mutation that breaks one invariant yields at
    // least one violation naming that field's path.
    runner()
        .run(&(arb_agent_doc(), 0usize..9), |(mut doc, mutation)| {
            let expected_path = match mutation {
                0 => {
                    doc["agent_name"] = serde_json::json!("  ");
                    "agent_name"
                }
                1 => {
                    doc["llm"]["temperature"] = serde_json::json!(1.5);
                    "llm.temperature"
                }
                2 => {
                    doc["llm"]["presence_penalty"] = serde_json::json!(2.5);
                    "llm.presence_penalty"
                }
                3 => {
                    doc["llm"]["frequency_penalty"] = serde_json::json!(-2.5);
                    "llm.frequency_penalty"
                }
                4 => {
                    doc["llm"]["max_tokens"] = serde_json::json!(0);
                    "llm.max_tokens"
                }
                5 => {
                    doc["return_values"] = serde_json::json!([]);
                    "return_values"
                }
                6 => {
                    doc["prompt"]["template_messages"][0]["content"] =
                        serde_json::json!("refers to {zz_undeclared_zz}");
                    "prompt.template_messages[0]"
                }
                7 => {
                    let msgs = doc["prompt"]["template_messages"].as_array_mut().unwrap();
                    let idx = msgs.len() - 1; // the placeholder message
                    msgs[idx]["content"] = serde_json::json!("9 not an identifier");
                    "prompt.template_messages"
                }
                _ => {
                    doc["tools"]["allowed_basic_tools"] = serde_json::json!(["dup", "dup"]);
                    "tools"
                }
            };
            let def = parse_agent_definition(&doc.to_string()).unwrap().definition;
            let violations = validate_agent_definition(&def);
            prop_assert!(
                violations.iter().any(|v| v.path().starts_with(expected_path)),
                "mutation {} produced no violation at {}: {:?}",
                mutation,
                expected_path,
                violations
            );
            Ok(())
        })
        .unwrap();

    // Render totality: with full bindings, rendering never errors and leaves
    // no declared variable unexpanded.
    let template_parts = (
        proptest::collection::vec(
            prop_oneof![
                "[a-zA-Z0-9 .,]{0,10}".prop_map(TemplatePiece::Literal),
                (0usize..3).prop_map(TemplatePiece::Variable),
                Just(TemplatePiece::OpenEscape),
                Just(TemplatePiece::CloseEscape),
            ],
            0..12,
        ),
        proptest::collection::vec("[a-z0-9 ]{0,8}", 3),
    );
    #[derive(Debug, Clone)]
    enum TemplatePiece {
        Literal(String),
        Variable(usize),
        OpenEscape,
        CloseEscape,
    }
    runner()
        .run(&template_parts, |(pieces, values)| {
            let names = ["alpha_var", "beta_var", "gamma_var"];
            let mut template = String::new();
            for piece in &pieces {
                match piece {
                    TemplatePiece::Literal(s) => template.push_str(s),
                    TemplatePiece::Variable(i) => {
                        template.push('{');
                        template.push_str(names[*i]);
                        template.push('}');
                    }
                    TemplatePiece::OpenEscape => template.push_str("{{"),
                    TemplatePiece::CloseEscape => template.push_str("}}"),
                }
            }
            let bindings: Bindings = names
                .iter()
                .zip(values.iter())
                .map(|(n, v)| (n.to_string(), v.clone()))
                .collect();
            let rendered = render_template(&template, &bindings);
            prop_assert!(rendered.is_ok(), "template {template:?}");
            let rendered = rendered.unwrap();
            for name in names {
                let unexpanded = format!("{{{name}}}");
                prop_assert!(!rendered.contains(&unexpanded), "unexpanded token left behind");
            }
            Ok(())
        })
        .unwrap();

    // Escape round-trip.
    assert_eq!(render_template("{{x}}", &Bindings::new()).unwrap(), "{x}");

    // Window monotonicity: LastK(k1) is a suffix of LastK(k2) for k1 <= k2.
    runner()
        .run(
            &(proptest::collection::vec(vocab_message(), 0..12), 1usize..6, 0usize..6),
            |(messages, k1, extra)| {
                let refs: Vec<&str> = messages.iter().map(String::as_str).collect();
                let t = transcript_of(&refs);
                let small = apply_memory_policy(&MemoryPolicy::LastK { k: k1 }, &t);
                let large = apply_memory_policy(&MemoryPolicy::LastK { k: k1 + extra }, &t);
                prop_assert!(large.len() >= small.len());
                prop_assert_eq!(&large[large.len() - small.len()..], small);
                Ok(())
            },
        )
        .unwrap();

    // Fixture-key stability and injectivity over the generated corpus.
    let corpus: std::sync::Mutex<BTreeMap<String, String>> = std::sync::Mutex::new(BTreeMap::new());
    let arb_request = (
        "[a-z0-9-]{1,10}",
        proptest::collection::vec(("[a-z ]{0,12}", any::<bool>()), 1..5),
        0.0..=1.0f64,
        proptest::option::of(1u64..500),
    )
        .prop_map(|(model, messages, temperature, max_tokens)| ChatRequest {
            model_name: model.clone(),
            messages: messages
                .into_iter()
                .map(|(content, user)| {
                    if user {
                        colloquy::prompt::RenderedMessage::user(content)
                    } else {
                        colloquy::prompt::RenderedMessage::system(content)
                    }
                })
                .collect(),
            sampling: colloquy::agent::SamplingParams {
                model_name: model,
                temperature,
                max_tokens,
                presence_penalty: 0.0,
                frequency_penalty: 0.0,
            },
        });
    // key stability at 1000 cases plus injectivity over a 10^4 corpus
    TestRunner::new(PtConfig { cases: 10_000, ..PtConfig::default() })
        .run(&arb_request, |request| {
            let key = fixture_key(&request);
            prop_assert_eq!(&key, &fixture_key(&request.clone()), "equal requests, equal keys");
            let canonical = colloquy::canonical::to_canonical_string(
                &serde_json::to_value(&request).unwrap(),
            );
            let mut corpus = corpus.lock().unwrap();
            if let Some(existing) = corpus.get(&key) {
                prop_assert_eq!(existing, &canonical, "key collision on distinct requests");
            } else {
                corpus.insert(key, canonical);
            }
            Ok(())
        })
        .unwrap();

    // Metric bounds on arbitrary transcripts.
    runner()
        .run(&proptest::collection::vec(vocab_message(), 1..12), |messages| {
            let refs: Vec<&str> = messages.iter().map(String::as_str).collect();
            let t = transcript_of(&refs);
            let unique = unique_content_pct(&t).unwrap();
            prop_assert!((0.0..=100.0).contains(&unique));
            let diversity = diversity_score(&t).unwrap();
            prop_assert!((0.0..=1.0).contains(&diversity));
            let stability = sentiment_stability(&t, &lexicon);
            prop_assert!((0.0..=100.0).contains(&stability));
            let retention = context_retention(&t);
            prop_assert!((0.0..=100.0).contains(&retention));
            Ok(())
        })
        .unwrap();

    // Permutation invariance of unique content and diversity.
    runner()
        .run(
            &(proptest::collection::vec(vocab_message(), 1..10), any::<u64>()),
            |(messages, seed)| {
                let mut shuffled = messages.clone();
                let mut rng = colloquy::rng::SplitMix64::new(seed);
                for i in (1..shuffled.len()).rev() {
                    let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                    shuffled.swap(i, j);
                }
                let refs_a: Vec<&str> = messages.iter().map(String::as_str).collect();
                let refs_b: Vec<&str> = shuffled.iter().map(String::as_str).collect();
                let (ta, tb) = (transcript_of(&refs_a), transcript_of(&refs_b));
                prop_assert_eq!(
                    unique_content_pct(&ta).unwrap(),
                    unique_content_pct(&tb).unwrap()
                );
                prop_assert_eq!(diversity_score(&ta).unwrap(), diversity_score(&tb).unwrap());
                Ok(())
            },
        )
        .unwrap();

    // Order DOES matter for the dynamic metrics: fixed counterexamples.
    let ordered = transcript_of(&["good", "great", "bad", "worse"]);
    let reordered = transcript_of(&["good", "bad", "great", "worse"]);
    assert_ne!(
        sentiment_stability(&ordered, &lexicon),
        sentiment_stability(&reordered, &lexicon),
        "stability must be adjacency-sensitive"
    );
    let ordered = transcript_of(&["alpha", "beta", "alpha beta"]);
    let reordered = transcript_of(&["alpha beta", "alpha", "beta"]);
    assert_ne!(
        context_retention(&ordered),
        context_retention(&reordered),
        "retention must be order-sensitive"
    );

    // Duplication law: appending an exact duplicate strictly lowers unique
    // content and never raises diversity.
    runner()
        .run(
            &(proptest::collection::vec(vocab_message(), 1..10), any::<proptest::sample::Index>()),
            |(messages, index)| {
                let dup = messages[index.index(messages.len())].clone();
                let mut extended = messages.clone();
                extended.push(dup);
                let refs_a: Vec<&str> = messages.iter().map(String::as_str).collect();
                let refs_b: Vec<&str> = extended.iter().map(String::as_str).collect();
                let (ta, tb) = (transcript_of(&refs_a), transcript_of(&refs_b));
                prop_assert!(
                    unique_content_pct(&tb).unwrap() < unique_content_pct(&ta).unwrap()
                );
                prop_assert!(diversity_score(&tb).unwrap() <= diversity_score(&ta).unwrap());
                Ok(())
            },
        )
        .unwrap();

    // Objective monotonicity: appending messages never lowers completion.
    let (scenario, _) = oracle_scenario();
    runner()
        .run(
            &(
                proptest::collection::vec(vocab_message(), 0..8),
                proptest::collection::vec(vocab_message(), 1..4),
            ),
            |(base, extension)| {
                let refs: Vec<&str> = base.iter().map(String::as_str).collect();
                let before = evaluate_objectives(&scenario, &transcript_of(&refs));
                let mut extended = base.clone();
                extended.extend(extension);
                let refs: Vec<&str> = extended.iter().map(String::as_str).collect();
                let after = evaluate_objectives(&scenario, &transcript_of(&refs));
                prop_assert!(after >= before);
                Ok(())
            },
        )
        .unwrap();

    // Turn-taking laws: strict alternation with 2 agents; no immediate repeat
    // under seeded random selection for any roster > 1.
    runner()
        .run(&(any::<u64>(), 2usize..5), |(seed, roster_len)| {
            let roster: Vec<String> = (0..roster_len).map(|i| format!("agent{i}")).collect();
            let selection = SpeakerSelection::SeededRandom { seed };
            let clock = FixedClock::new(0);
            let mut transcript = Transcript::new();
            let mut previous: Option<usize> = None;
            for step in 0..30 {
                let pick = select_next_speaker(&selection, step, &roster, &transcript).unwrap();
                if let Some(prev) = previous {
                    prop_assert_ne!(pick, prev);
                }
                transcript.push(Message::new(step, &roster[pick], "x", clock.now()));
                previous = Some(pick);
            }
            // alternation law for the 2-agent round-robin policy
            let two: Vec<String> = vec!["a".into(), "b".into()];
            let empty = Transcript::new();
            for step in 0..30 {
                let pick =
                    select_next_speaker(&SpeakerSelection::Alternate, step, &two, &empty).unwrap();
                prop_assert_eq!(pick, step % 2);
            }
            Ok(())
        })
        .unwrap();

    // Batch isolation: each row's results are unaffected by matrix order and
    // by failures of sibling runs.
    let isolation_cases = (
        proptest::collection::vec(1u32..4, 3),
        proptest::sample::select(vec![
            [0usize, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ]),
        any::<bool>(),
    );
    runner()
        .run(&isolation_cases, |(iteration_counts, order, fail_last)| {
            let agents = test_agents(&["PM", "SA"]);
            let scenario = test_scenario();
            let lexicon = SentimentLexicon::builtin();
            let make_configs = || -> Vec<SimulationConfig> {
                iteration_counts
                    .iter()
                    .enumerate()
                    .map(|(i, iters)| {
                        let mut c = test_config(&["PM", "SA"], *iters);
                        c.sim_id = i as u64 + 1;
                        // an iteration count past the script aborts that run
                        if fail_last && i == 2 {
                            c.iterations = 9;
                        }
                        c
                    })
                    .collect()
            };
            let script = Script::from_replies(&[
                ("PM", &["pm one road map", "pm two risk"]),
                ("SA", &["sa one good", "sa two bad"]),
            ]);
            let run_in = |order: &[usize]| -> BTreeMap<u64, (String, String)> {
                let configs = make_configs();
                let experiment = LoadedExperiment {
                    matrix: colloquy::experiment::ExperimentMatrix {
                        simulations: order.iter().map(|i| configs[*i].clone()).collect(),
                    },
                    agents: agents.clone(),
                    scenario: scenario.clone(),
                    lexicon: lexicon.clone(),
                    backend: None,
                    base_dir: std::path::PathBuf::from("."),
                };
                let factory = |_: &SimulationConfig| -> Box<dyn colloquy::backend::ChatBackend> {
                    Box::new(ScriptedBackend::new(script.clone()))
                };
                let tools = ToolRegistry::new();
                let options = BatchOptions {
                    out_dir: None,
                    clock: ClockSpec::Fixed { epoch_secs: 7 },
                    workers: 1,
                    report: Default::default(),
                };
                let table = run_matrix(&experiment, &factory, &tools, &options);
                table
                    .rows
                    .iter()
                    .map(|r| {
                        let metrics = r
                            .metrics
                            .as_ref()
                            .map(|m| format!("{:?}", m.to_json_value()))
                            .unwrap_or_default();
                        (r.sim_id, (r.status.clone(), metrics))
                    })
                    .collect()
            };
            let natural = run_in(&[0, 1, 2]);
            let permuted = run_in(&order);
            prop_assert_eq!(natural, permuted, "rows must not depend on matrix order");
            Ok(())
        })
        .unwrap();

    assert_within(Duration::from_secs(120), started, "criterion 8");
}
