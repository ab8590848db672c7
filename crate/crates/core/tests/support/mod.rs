//! Shared test harness: a minimal OpenAI-compatible stub server that echoes
//! the last message of each request, plus fixture builders used across the
//! integration suites.

#![allow(dead_code)]

use colloquy::agent::{parse_agent_definition, AgentDefinition};
use colloquy::orchestrator::{SimulationConfig, SpeakerSelection};
use colloquy::prompt::Bindings;
use colloquy::scenario::{parse_scenario, Scenario};
use colloquy::transcript::{MemoryPolicy, Message, Transcript};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

/// In-process chat-completions stub. Each request gets a 200 response whose
/// content echoes the last incoming message; the first `fail_first` requests
/// get a 500 instead. Captured request bodies stay available after shutdown.
pub struct StubServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    pub requests: Arc<Mutex<Vec<serde_json::Value>>>,
    remaining_failures: Arc<AtomicUsize>,
    delay: Arc<Mutex<Duration>>,
}

impl StubServer {
    pub fn start() -> Self {
        Self::start_with(0)
    }

    pub fn start_with(fail_first: usize) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        listener.set_nonblocking(true).expect("nonblocking listener");
        let addr = listener.local_addr().expect("local addr");
        let shutdown = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let remaining_failures = Arc::new(AtomicUsize::new(fail_first));
        let delay = Arc::new(Mutex::new(Duration::ZERO));

        let shutdown2 = shutdown.clone();
        let requests2 = requests.clone();
        let failures2 = remaining_failures.clone();
        let delay2 = delay.clone();
        let handle = std::thread::spawn(move || {
            while !shutdown2.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let pause = *delay2.lock().unwrap();
                        if !pause.is_zero() {
                            std::thread::sleep(pause);
                        }
                        handle_connection(stream, &requests2, &failures2);
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(2));
                    }
                    Err(_) => break,
                }
            }
        });

        Self { addr, shutdown, handle: Some(handle), requests, remaining_failures, delay }
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Delay every subsequent response; used to trip client timeouts.
    pub fn set_delay(&self, delay: Duration) {
        *self.delay.lock().unwrap() = delay;
    }

    pub fn stop(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(
    mut stream: TcpStream,
    requests: &Arc<Mutex<Vec<serde_json::Value>>>,
    failures: &Arc<AtomicUsize>,
) {
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok();
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        match stream.read(&mut chunk) {
            Ok(0) => return,
            Ok(n) => {
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = find_header_end(&buf) {
                    break pos;
                }
            }
            Err(_) => return,
        }
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length = headers
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse::<usize>().ok())?
        })
        .unwrap_or(0);
    let body_start = header_end + 4;
    while buf.len() < body_start + content_length {
        match stream.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
            Err(_) => return,
        }
    }
    let body: serde_json::Value =
        serde_json::from_slice(&buf[body_start..body_start + content_length])
            .unwrap_or(serde_json::Value::Null);

    let echo = body
        .get("messages")
        .and_then(|m| m.as_array())
        .and_then(|m| m.last())
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .unwrap_or("")
        .to_string();
    let message_count = body
        .get("messages")
        .and_then(|m| m.as_array())
        .map(|m| m.len())
        .unwrap_or(0);
    requests.lock().unwrap().push(body);

    let (status_line, payload) = if failures
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok()
    {
        ("HTTP/1.1 500 Internal Server Error", "upstream unavailable".to_string())
    } else {
        let response = serde_json::json!({
            "choices": [{
                "message": {"role": "assistant", "content": echo},
                "finish_reason": "stop"
            }],
            "usage": {"prompt_tokens": message_count, "completion_tokens": 1}
        });
        ("HTTP/1.1 200 OK", response.to_string())
    };
    let _ = write!(
        stream,
        "{status_line}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.flush();
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

pub fn assets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

pub fn test_agent(name: &str, with_search: bool) -> AgentDefinition {
    let doc = serde_json::json!({
        "agent_name": name,
        "prompt": {
            "input_variables": ["instruction"],
            "template_messages": [
                {"role": "system", "content": format!("You are {name}.")},
                {"role": "placeholder", "content": "instruction"}
            ],
            "template_format": "f-string"
        },
        "llm": {"model_name": "gpt-3.5-turbo", "temperature": 0.0, "max_tokens": null},
        "tools": if with_search {
            serde_json::json!({"allowed_external_tools": ["search"]})
        } else {
            serde_json::json!({})
        },
        "return_values": ["output"],
        "agent_type": if with_search { "dialogue_agent_with_tools" } else { "dialogue_agent" }
    });
    parse_agent_definition(&doc.to_string()).unwrap().definition
}

pub fn test_agents(names: &[&str]) -> BTreeMap<String, AgentDefinition> {
    names.iter().map(|n| (n.to_string(), test_agent(n, false))).collect()
}

pub fn test_scenario() -> Scenario {
    parse_scenario(
        &serde_json::json!({
            "name": "harness",
            "phase": "pi_planning",
            "seed_inputs": {},
            "kickoff_instruction": "begin the discussion",
            "objectives": [
                {"id": "o1", "description": "", "match_patterns": ["road map"]},
                {"id": "o2", "description": "", "match_patterns": ["never-matched-zzz"]}
            ]
        })
        .to_string(),
    )
    .unwrap()
}

pub fn test_config(names: &[&str], iterations: u32) -> SimulationConfig {
    SimulationConfig {
        sim_id: 1,
        simulation_name: "harness".into(),
        model_type: "gpt-3.5-turbo".into(),
        iterations,
        temperature: 0.7,
        agents_involved: names.iter().map(|s| s.to_string()).collect(),
        selection: SpeakerSelection::Alternate,
        memory: MemoryPolicy::Full,
        elaboration_enabled: false,
        seed_inputs: Bindings::new(),
        max_tool_calls: 3,
        notes: String::new(),
    }
}

pub fn transcript_of(contents: &[&str]) -> Transcript {
    let mut t = Transcript::new();
    for (i, c) in contents.iter().enumerate() {
        let ts = chrono::DateTime::from_timestamp(i as i64, 0).unwrap();
        t.push(Message::new(i, "A", c, ts));
    }
    t
}
