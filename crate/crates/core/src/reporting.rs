//! Run artifacts: color-coded HTML chat log, plain-text log, execution log,
//! and the canonical config snapshot. All emitters are pure functions of
//! (run, options) and produce byte-identical output for equal inputs.
//!
//! Per-run layout on disk:
//! `out/<sim_id>/chat.html`, `chat.txt`, `execution.log`,
//! `config.snapshot.json`, `metrics.json`.

use crate::canonical::{sha256_hex, to_canonical_document};
use crate::clock::{format_timestamp, parse_timestamp};
use crate::orchestrator::{parse_snapshot_config, SimulationRun};
use crate::schema::SchemaError;
use crate::transcript::{Message, Transcript};
use std::path::{Path, PathBuf};

pub const DEFAULT_TRUNCATE_CHARS: usize = 600;
pub const MIN_TRUNCATE_CHARS: usize = 40;

/// Default palette: eight visually distinct hex colors.
pub const DEFAULT_PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone)]
pub struct ReportOptions {
    /// Displayed message length limit; content beyond it collapses behind a
    /// visible truncation marker. Values below 40 are treated as 40.
    pub truncate_chars: usize,
    pub palette: Vec<String>,
    pub include_tool_traces: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            truncate_chars: DEFAULT_TRUNCATE_CHARS,
            palette: DEFAULT_PALETTE.iter().map(|s| s.to_string()).collect(),
            include_tool_traces: true,
        }
    }
}

/// FNV-1a 64-bit over UTF-8 bytes; the stable hash used to assign palette
/// colors to agent names.
pub fn stable_hash(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in s.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub fn config_digest(run: &SimulationRun) -> String {
    sha256_hex(run.config_snapshot.as_bytes())
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn truncate_chars(s: &str, limit: usize) -> (&str, bool) {
    match s.char_indices().nth(limit) {
        Some((byte_idx, _)) => (&s[..byte_idx], true),
        None => (s, false),
    }
}

struct RunHeader {
    name: String,
    sim_id: String,
}

fn run_header(run: &SimulationRun) -> RunHeader {
    match parse_snapshot_config(&run.config_snapshot) {
        Ok(config) => RunHeader {
            name: config.simulation_name,
            sim_id: config.sim_id.to_string(),
        },
        Err(_) => RunHeader { name: "unknown".into(), sim_id: "?".into() },
    }
}

const HTML_STYLE: &str = "\
body{font-family:-apple-system,'Segoe UI',Roboto,sans-serif;margin:0;background:#f4f5f7;color:#1c1e21}\
header{background:#232936;color:#fff;padding:16px 24px}\
header h1{margin:0 0 4px;font-size:20px}\
header p{margin:0;font-size:12px;opacity:.8}\
main{max-width:860px;margin:24px auto;padding:0 16px}\
.message{background:#fff;border-radius:8px;border-left:6px solid #888;box-shadow:0 1px 2px rgba(0,0,0,.08);margin:0 0 14px;padding:12px 16px}\
.head{display:flex;align-items:center;gap:8px;margin-bottom:6px}\
.badge{display:inline-flex;align-items:center;justify-content:center;width:28px;height:28px;border-radius:50%;color:#fff;font-weight:700}\
.agent{font-weight:700}\
.idx,.ts{color:#667;font-size:12px}\
.content{white-space:pre-wrap;word-wrap:break-word}\
details{margin-top:8px;font-size:13px}\
details pre{white-space:pre-wrap;background:#f0f1f4;padding:8px;border-radius:6px}\
.tool{color:#445;font-size:13px;margin:4px 0}\
";

/// Self-contained HTML chat log. Each agent gets a palette color chosen by
/// `stable_hash(agent_name) mod palette_len` and an initial-letter badge;
/// over-limit content is truncated with a visible marker and preserved in
/// full inside a collapsed section.
pub fn emit_html(run: &SimulationRun, options: &ReportOptions) -> String {
    let limit = options.truncate_chars.max(MIN_TRUNCATE_CHARS);
    let palette: Vec<&str> = if options.palette.is_empty() {
        DEFAULT_PALETTE.to_vec()
    } else {
        options.palette.iter().map(String::as_str).collect()
    };
    let header = run_header(run);
    let digest = config_digest(run);

    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    html.push_str(&format!("<title>{}</title>\n", escape_html(&header.name)));
    html.push_str(&format!("<style>{HTML_STYLE}</style>\n</head>\n<body>\n"));
    html.push_str("<header>\n");
    html.push_str(&format!("<h1>{}</h1>\n", escape_html(&header.name)));
    html.push_str(&format!(
        "<p>sim_id {} · {} messages · config {}</p>\n",
        escape_html(&header.sim_id),
        run.transcript.len(),
        &digest[..16],
    ));
    html.push_str("</header>\n<main>\n");

    for msg in run.transcript.iter() {
        let color = palette[(stable_hash(&msg.agent_name) % palette.len() as u64) as usize];
        let initial = msg
            .agent_name
            .chars()
            .next()
            .map(|c| c.to_uppercase().to_string())
            .unwrap_or_else(|| "?".to_string());
        let (shown, truncated) = truncate_chars(&msg.content, limit);

        html.push_str(&format!(
            "<div class=\"message\" style=\"border-left-color:{color}\">\n"
        ));
        html.push_str(&format!(
            "<div class=\"head\"><span class=\"badge\" style=\"background:{color}\">{}</span><span class=\"agent\">{}</span><span class=\"idx\">#{}</span><span class=\"ts\">{}</span></div>\n",
            escape_html(&initial),
            escape_html(&msg.agent_name),
            msg.index,
            format_timestamp(&msg.timestamp),
        ));
        if truncated {
            html.push_str(&format!(
                "<div class=\"content\">{}…</div>\n",
                escape_html(shown)
            ));
            html.push_str(&format!(
                "<details><summary>full message ({} chars)</summary><pre>{}</pre></details>\n",
                msg.content.chars().count(),
                escape_html(&msg.content),
            ));
        } else {
            html.push_str(&format!("<div class=\"content\">{}</div>\n", escape_html(shown)));
        }
        if options.include_tool_traces && !msg.tool_trace.is_empty() {
            html.push_str(&format!(
                "<details><summary>tool calls ({})</summary>\n",
                msg.tool_trace.len()
            ));
            for entry in &msg.tool_trace {
                let args = serde_json::to_string(&entry.directive.args).unwrap_or_default();
                html.push_str(&format!(
                    "<div class=\"tool\">{} {} → {}{}</div>\n",
                    escape_html(&entry.directive.tool_name),
                    escape_html(&args),
                    if entry.result.ok { "" } else { "[failed] " },
                    escape_html(&entry.result.content),
                ));
            }
            html.push_str("</details>\n");
        }
        html.push_str("</div>\n");
    }

    html.push_str("</main>\n</body>\n</html>\n");
    html
}

/// Plain-text log: one header line for the run, then per message a line
/// `[index] AgentName @ ISO-8601:` followed by the untruncated content.
pub fn emit_text(run: &SimulationRun) -> String {
    let header = run_header(run);
    let mut out = format!(
        "# run name={:?} sim_id={} config_digest={}\n",
        header.name,
        header.sim_id,
        config_digest(run)
    );
    for msg in run.transcript.iter() {
        out.push_str(&format!(
            "[{}] {} @ {}:\n{}\n",
            msg.index,
            msg.agent_name,
            format_timestamp(&msg.timestamp),
            msg.content
        ));
    }
    out
}

/// Reconstruct a transcript from `emit_text` output. Tool traces are not
/// part of the text format and come back empty.
pub fn parse_text_transcript(text: &str) -> Result<Transcript, SchemaError> {
    let mut messages: Vec<Message> = Vec::new();
    let mut current: Option<(usize, String, chrono::DateTime<chrono::Utc>, Vec<String>)> = None;

    let flush = |current: &mut Option<(usize, String, chrono::DateTime<chrono::Utc>, Vec<String>)>,
                 messages: &mut Vec<Message>| {
        if let Some((index, agent, ts, lines)) = current.take() {
            let mut msg = Message::new(index, &agent, &lines.join("\n"), ts);
            msg.index = index;
            messages.push(msg);
        }
    };

    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && line.starts_with("# run ") {
            continue;
        }
        let expected_index = messages.len() + usize::from(current.is_some());
        if let Some(header) = parse_message_header(line, expected_index) {
            flush(&mut current, &mut messages);
            current = Some((header.0, header.1, header.2, Vec::new()));
        } else if let Some((_, _, _, lines)) = current.as_mut() {
            lines.push(line.to_string());
        } else if !line.trim().is_empty() {
            return Err(SchemaError::Invalid {
                path: format!("line {}", lineno + 1),
                detail: "content before first message header".into(),
            });
        }
    }
    flush(&mut current, &mut messages);
    Ok(Transcript::from_messages(messages))
}

fn parse_message_header(
    line: &str,
    expected_index: usize,
) -> Option<(usize, String, chrono::DateTime<chrono::Utc>)> {
    let rest = line.strip_prefix('[')?;
    let close = rest.find(']')?;
    let index: usize = rest[..close].parse().ok()?;
    if index != expected_index {
        return None;
    }
    let rest = rest[close + 1..].strip_prefix(' ')?;
    let body = rest.strip_suffix(':')?;
    let at = body.rfind(" @ ")?;
    let agent = &body[..at];
    let ts = parse_timestamp(&body[at + 3..])?;
    Some((index, agent.to_string(), ts))
}

/// One line per event: `ISO-8601 LEVEL code detail`, chronological.
pub fn emit_execution_log(run: &SimulationRun) -> String {
    let mut out = String::new();
    for event in &run.execution_log {
        out.push_str(&format!(
            "{} {} {} {}\n",
            format_timestamp(&event.timestamp),
            event.level.label(),
            event.code,
            event.detail
        ));
    }
    out
}

/// The canonical snapshot composed when the run started.
pub fn emit_config_snapshot(run: &SimulationRun) -> String {
    run.config_snapshot.clone()
}

/// Write the full artifact set for one run into `dir`. Returns the paths
/// written. `metrics.json` appears only when metrics were computed.
pub fn persist_run(
    run: &SimulationRun,
    dir: &Path,
    options: &ReportOptions,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut write = |name: &str, contents: &str| -> std::io::Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, contents.as_bytes())?;
        written.push(path);
        Ok(())
    };
    write("config.snapshot.json", &emit_config_snapshot(run))?;
    write("chat.html", &emit_html(run, options))?;
    write("chat.txt", &emit_text(run))?;
    write("execution.log", &emit_execution_log(run))?;
    if let Some(metrics) = &run.metrics {
        write("metrics.json", &to_canonical_document(&metrics.to_json_value()))?;
    }
    Ok(written)
}
