//! Transcript quality metrics.
//!
//! Five scores summarize one run: unique content percentage, diversity
//! (type-token ratio), completion against scenario objectives, sentiment
//! stability, and context retention. The definitions here are the canonical
//! ones for this engine; they are deterministic, order-aware where the metric
//! measures dynamics, and platform-stable.

use crate::scenario::{evaluate_objectives, Scenario};
use crate::schema::{as_object, parse_json, SchemaError};
use crate::transcript::Transcript;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// 100 × distinct normalized message texts / messages, in [0, 100].
    pub unique_content_pct: f64,
    /// Distinct-unigram (type-token) ratio over the whole transcript, in [0, 1].
    pub diversity_score: f64,
    /// 100 × objectives met / objectives, in [0, 100].
    pub completion_score: f64,
    /// 100 × adjacent message pairs with unchanged sentiment class, in [0, 100].
    pub sentiment_stability: f64,
    /// 100 × messages sharing vocabulary with any earlier message, in [0, 100].
    pub context_retention: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("empty transcript")]
    EmptyTranscript,
}

/// Lowercase, split on non-alphanumeric runs, drop empty tokens.
pub fn normalize_text(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn unique_content_pct(transcript: &Transcript) -> Result<f64, MetricsError> {
    if transcript.is_empty() {
        return Err(MetricsError::EmptyTranscript);
    }
    let mut distinct: BTreeSet<Vec<String>> = BTreeSet::new();
    for msg in transcript.iter() {
        distinct.insert(normalize_text(&msg.content));
    }
    Ok(100.0 * distinct.len() as f64 / transcript.len() as f64)
}

pub fn diversity_score(transcript: &Transcript) -> Result<f64, MetricsError> {
    let mut total = 0usize;
    let mut unique: BTreeSet<String> = BTreeSet::new();
    for msg in transcript.iter() {
        for token in normalize_text(&msg.content) {
            total += 1;
            unique.insert(token);
        }
    }
    if total == 0 {
        return Err(MetricsError::EmptyTranscript);
    }
    Ok(unique.len() as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sentiment {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentLexicon {
    pub positive: BTreeSet<String>,
    pub negative: BTreeSet<String>,
}

const BUILTIN_POSITIVE: [&str; 20] = [
    "agree", "aligned", "benefit", "clear", "confident", "effective", "excellent", "good",
    "great", "happy", "improve", "perfect", "positive", "progress", "ready", "resolved",
    "success", "supportive", "thanks", "well",
];

const BUILTIN_NEGATIVE: [&str; 20] = [
    "bad", "blocked", "broken", "concern", "conflict", "delay", "doubt", "error", "fail",
    "failure", "issue", "missing", "negative", "poor", "problem", "risk", "slip", "unclear",
    "unhappy", "worse",
];

impl SentimentLexicon {
    /// The bundled lexicon, identical to `assets/lexicon.json`.
    pub fn builtin() -> Self {
        Self {
            positive: BUILTIN_POSITIVE.iter().map(|s| s.to_string()).collect(),
            negative: BUILTIN_NEGATIVE.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Lexicon file format: `{"positive": [...], "negative": [...]}`.
    /// Entries must be lowercase and the two sets disjoint.
    pub fn parse(raw: &str) -> Result<Self, SchemaError> {
        let value = parse_json(raw)?;
        let obj = as_object(&value, "")?;
        let read_set = |key: &str| -> Result<BTreeSet<String>, SchemaError> {
            let list = crate::schema::string_list(
                obj.get(key)
                    .ok_or_else(|| SchemaError::MissingField(key.to_string()))?,
                key,
            )?;
            for word in &list {
                if word.to_lowercase() != *word {
                    return Err(SchemaError::Invalid {
                        path: key.to_string(),
                        detail: format!("entry {word:?} is not lowercase"),
                    });
                }
            }
            Ok(list.into_iter().collect())
        };
        let positive = read_set("positive")?;
        let negative = read_set("negative")?;
        if let Some(shared) = positive.intersection(&negative).next() {
            return Err(SchemaError::Invalid {
                path: "positive/negative".into(),
                detail: format!("{shared:?} appears in both sets"),
            });
        }
        Ok(Self { positive, negative })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SchemaError> {
        let raw = std::fs::read_to_string(path).map_err(|e| SchemaError::Invalid {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::parse(&raw)
    }
}

impl Default for SentimentLexicon {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Sign of (positive hits − negative hits) over the normalized tokens, with
/// ties (including 0/0) classed neutral. Hits count token occurrences.
pub fn classify_sentiment(tokens: &[String], lexicon: &SentimentLexicon) -> Sentiment {
    let pos = tokens.iter().filter(|t| lexicon.positive.contains(*t)).count();
    let neg = tokens.iter().filter(|t| lexicon.negative.contains(*t)).count();
    match pos.cmp(&neg) {
        std::cmp::Ordering::Greater => Sentiment::Positive,
        std::cmp::Ordering::Less => Sentiment::Negative,
        std::cmp::Ordering::Equal => Sentiment::Neutral,
    }
}

/// 100 × (adjacent pairs with equal sentiment class) / (len − 1).
/// Transcripts of length ≤ 1 are defined as perfectly stable (100.0).
pub fn sentiment_stability(transcript: &Transcript, lexicon: &SentimentLexicon) -> f64 {
    if transcript.len() <= 1 {
        return 100.0;
    }
    let classes: Vec<Sentiment> = transcript
        .iter()
        .map(|m| classify_sentiment(&normalize_text(&m.content), lexicon))
        .collect();
    let stable = classes.windows(2).filter(|w| w[0] == w[1]).count();
    100.0 * stable as f64 / (classes.len() - 1) as f64
}

/// The fixed 50-word English stopword list used by context retention.
/// Overridable via a config path (one word per line, `#` comments allowed).
pub const STOPWORDS: [&str; 50] = [
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be",
    "because", "been", "but", "by", "can", "could", "do", "for", "from", "had", "has", "have",
    "he", "her", "his", "how", "i", "if", "in", "into", "is", "it", "its", "not", "of", "on",
    "or", "she", "so", "that", "the", "their", "there", "they", "this", "to", "was", "with",
];

pub fn builtin_stopwords() -> BTreeSet<String> {
    STOPWORDS.iter().map(|s| s.to_string()).collect()
}

pub fn load_stopwords(path: &std::path::Path) -> Result<BTreeSet<String>, SchemaError> {
    let raw = std::fs::read_to_string(path).map_err(|e| SchemaError::Invalid {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    Ok(raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect())
}

/// 100 × (messages after the first whose non-stopword token set intersects
/// the union of all earlier non-stopword tokens) / (len − 1).
/// Transcripts of length ≤ 1 are defined as fully retained (100.0).
pub fn context_retention(transcript: &Transcript) -> f64 {
    context_retention_with(transcript, &builtin_stopwords())
}

pub fn context_retention_with(transcript: &Transcript, stopwords: &BTreeSet<String>) -> f64 {
    if transcript.len() <= 1 {
        return 100.0;
    }
    let content_tokens = |content: &str| -> BTreeSet<String> {
        normalize_text(content)
            .into_iter()
            .filter(|t| !stopwords.contains(t))
            .collect()
    };
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut retained = 0usize;
    for (i, msg) in transcript.iter().enumerate() {
        let tokens = content_tokens(&msg.content);
        if i > 0 && tokens.iter().any(|t| seen.contains(t)) {
            retained += 1;
        }
        seen.extend(tokens);
    }
    100.0 * retained as f64 / (transcript.len() - 1) as f64
}

/// All five scores for one run, using the embedded stopword list.
pub fn compute_metrics(
    transcript: &Transcript,
    scenario: &Scenario,
    lexicon: &SentimentLexicon,
) -> Result<MetricsReport, MetricsError> {
    compute_metrics_with(transcript, scenario, lexicon, &builtin_stopwords())
}

pub fn compute_metrics_with(
    transcript: &Transcript,
    scenario: &Scenario,
    lexicon: &SentimentLexicon,
    stopwords: &BTreeSet<String>,
) -> Result<MetricsReport, MetricsError> {
    if transcript.is_empty() {
        return Err(MetricsError::EmptyTranscript);
    }
    Ok(MetricsReport {
        unique_content_pct: unique_content_pct(transcript)?,
        diversity_score: diversity_score(transcript)?,
        completion_score: 100.0 * evaluate_objectives(scenario, transcript),
        sentiment_stability: sentiment_stability(transcript, lexicon),
        context_retention: context_retention_with(transcript, stopwords),
    })
}

impl MetricsReport {
    /// JSON rendering with every score rounded to 2 decimal places, the
    /// precision used in all emitted artifacts.
    pub fn to_json_value(&self) -> serde_json::Value {
        let r2 = |x: f64| (x * 100.0).round() / 100.0;
        serde_json::json!({
            "unique_content_pct": r2(self.unique_content_pct),
            "diversity_score": r2(self.diversity_score),
            "completion_score": r2(self.completion_score),
            "sentiment_stability": r2(self.sentiment_stability),
            "context_retention": r2(self.context_retention),
        })
    }
}
