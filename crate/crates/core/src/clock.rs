//! Time source abstraction. Artifacts embed timestamps, so golden-file tests
//! and reproducible batches swap the system clock for a fixed one that starts
//! at a configured epoch and advances one second per reading.

use chrono::{DateTime, SecondsFormat, Utc};
use std::sync::atomic::{AtomicI64, Ordering};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock: reading `n` (0-based) returns `epoch + n` seconds.
#[derive(Debug)]
pub struct FixedClock {
    epoch_secs: i64,
    reads: AtomicI64,
}

impl FixedClock {
    pub fn new(epoch_secs: i64) -> Self {
        Self { epoch_secs, reads: AtomicI64::new(0) }
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        let n = self.reads.fetch_add(1, Ordering::SeqCst);
        DateTime::from_timestamp(self.epoch_secs + n, 0).expect("in-range timestamp")
    }
}

/// ISO-8601 with seconds precision and a `Z` suffix; the one timestamp format
/// used across every artifact.
pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.with_timezone(&Utc))
}
