//! The raw market: project catalog, investment log, day periods, target sets
//! and the market windows that freeze what is observable at a reference time.

mod catalog;
mod log;
mod period;
mod window;

pub use catalog::{ingest_projects, parse_projects, Project, ProjectCatalog, EMBEDDING_DIM};
pub use log::{
    ingest_investments, parse_investments, AccessScope, InvestmentLog, InvestmentRecord, Pledge,
    ReadViolation, ScopeGuard, Tripwire,
};
pub use period::{
    build_target_sets, chronological_split, day_period_of, local_day, SplitRatio, TargetSet,
    UtcOffset, PERIOD_COUNT,
};
pub use window::{window_for, MarketWindow, MAX_HISTORY_DAYS};

use std::fmt;

/// One hour, in seconds.
pub const HOUR: i64 = 3600;
/// Hours per day.
pub const HOURS_PER_DAY: i64 = 24;
/// One day, in seconds.
pub const DAY: i64 = HOURS_PER_DAY * HOUR;

/// A record that failed validation during ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based line number in the source file.
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: rejected ({})", self.line, self.reason)
    }
}

/// Result of ingesting a line-oriented file: the accepted value plus one
/// rejection per bad line.
#[derive(Debug, Clone)]
pub struct Ingested<T> {
    pub value: T,
    pub rejections: Vec<Rejection>,
}

impl<T> Ingested<T> {
    /// Writes one line per rejection followed by a summary count.
    pub fn write_report(&self, label: &str, mut out: impl std::io::Write) -> std::io::Result<()> {
        for r in &self.rejections {
            writeln!(out, "{label}: {r}")?;
        }
        writeln!(out, "{label}: {} rejected", self.rejections.len())
    }
}
