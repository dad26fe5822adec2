use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Ingested, ProjectCatalog, Rejection};
use crate::{Error, Result};

/// One timestamped pledge as it appears in an investments file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvestmentRecord {
    pub project_id: String,
    /// Epoch seconds UTC.
    pub timestamp: i64,
    pub amount: f64,
}

/// A pledge stored in a per-project index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pledge {
    pub timestamp: i64,
    pub amount: f64,
}

/// All pledges, sorted by time, with a per-project index for `[a, b)` range
/// queries. Immutable after construction.
#[derive(Debug, Clone, Default)]
pub struct InvestmentLog {
    records: Vec<InvestmentRecord>,
    by_project: HashMap<String, Vec<Pledge>>,
    tripwire: Option<Arc<Tripwire>>,
}

impl PartialEq for InvestmentLog {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl InvestmentLog {
    /// Validates records against the catalog and builds the sorted log.
    pub fn from_records(
        records: impl IntoIterator<Item = InvestmentRecord>,
        catalog: &ProjectCatalog,
    ) -> Ingested<InvestmentLog> {
        let mut accepted = Vec::new();
        let mut rejections = Vec::new();
        for (n, rec) in records.into_iter().enumerate() {
            match check_record(&rec, catalog) {
                Ok(()) => accepted.push(rec),
                Err(reason) => rejections.push(Rejection {
                    line: n + 1,
                    reason: reason.to_string(),
                }),
            }
        }
        Ingested {
            value: Self::build(accepted),
            rejections,
        }
    }

    fn build(mut records: Vec<InvestmentRecord>) -> Self {
        records.sort_by_key(|r| r.timestamp);
        let mut by_project: HashMap<String, Vec<Pledge>> = HashMap::new();
        for r in &records {
            by_project
                .entry(r.project_id.clone())
                .or_default()
                .push(Pledge {
                    timestamp: r.timestamp,
                    amount: r.amount,
                });
        }
        InvestmentLog {
            records,
            by_project,
            tripwire: None,
        }
    }

    /// All records in ascending timestamp order.
    pub fn records(&self) -> &[InvestmentRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn newest_timestamp(&self) -> Option<i64> {
        self.records.last().map(|r| r.timestamp)
    }

    /// Pledges of `project_id` with `start <= t < end`, in time order.
    pub fn pledges_in(&self, project_id: &str, start: i64, end: i64) -> &[Pledge] {
        if let Some(tw) = &self.tripwire {
            tw.observe(project_id, start, end);
        }
        let Some(all) = self.by_project.get(project_id) else {
            return &[];
        };
        let lo = all.partition_point(|p| p.timestamp < start);
        let hi = all.partition_point(|p| p.timestamp < end).max(lo);
        &all[lo..hi]
    }

    /// Sum of pledged amounts over `[start, end)`.
    pub fn amount_in(&self, project_id: &str, start: i64, end: i64) -> f64 {
        self.pledges_in(project_id, start, end)
            .iter()
            .map(|p| p.amount)
            .sum()
    }

    /// Installs an access tripwire on this log (and its clones made later).
    pub fn arm_tripwire(&mut self) -> Arc<Tripwire> {
        let tw = Arc::new(Tripwire::default());
        self.tripwire = Some(tw.clone());
        tw
    }

    /// Declares what the following reads are allowed to see. A no-op unless a
    /// tripwire is armed.
    pub fn scope(&self, scope: AccessScope) -> ScopeGuard<'_> {
        if let Some(tw) = &self.tripwire {
            tw.state.lock().unwrap().scopes.push(scope);
        }
        ScopeGuard {
            tripwire: self.tripwire.as_deref(),
        }
    }
}

fn check_record(
    rec: &InvestmentRecord,
    catalog: &ProjectCatalog,
) -> std::result::Result<(), &'static str> {
    let Some(project) = catalog.get(&rec.project_id) else {
        return Err("unknown project");
    };
    if !(rec.amount.is_finite() && rec.amount > 0.0) {
        return Err("amount");
    }
    if rec.timestamp < project.launch_time {
        return Err("before launch");
    }
    Ok(())
}

/// Parses JSON-object lines of investments against a loaded catalog.
pub fn parse_investments(text: &str, catalog: &ProjectCatalog) -> Ingested<InvestmentLog> {
    let mut accepted = Vec::new();
    let mut rejections = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<InvestmentRecord>(line)
            .map_err(|e| format!("parse: {e}"))
            .and_then(|rec| {
                check_record(&rec, catalog)
                    .map(|()| rec)
                    .map_err(str::to_string)
            });
        match outcome {
            Ok(rec) => accepted.push(rec),
            Err(reason) => rejections.push(Rejection {
                line: n + 1,
                reason,
            }),
        }
    }
    Ingested {
        value: InvestmentLog::build(accepted),
        rejections,
    }
}

pub fn ingest_investments(
    path: impl AsRef<Path>,
    catalog: &ProjectCatalog,
) -> Result<Ingested<InvestmentLog>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_investments(&text, catalog))
}

/// What a block of log reads is permitted to touch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessScope {
    /// Feature reads: only `t < cutoff`.
    Before { cutoff: i64 },
    /// A label read: one project's records in `[start, end)`.
    Label {
        project_id: String,
        start: i64,
        end: i64,
    },
    /// Auxiliary loss targets: records in `[start, end)`, training only.
    Auxiliary { start: i64, end: i64 },
}

impl AccessScope {
    fn permits(&self, project_id: &str, start: i64, end: i64) -> bool {
        match self {
            AccessScope::Before { cutoff } => end <= *cutoff,
            AccessScope::Label {
                project_id: p,
                start: s,
                end: e,
            } => p == project_id && start >= *s && end <= *e,
            AccessScope::Auxiliary { start: s, end: e } => start >= *s && end <= *e,
        }
    }
}

/// A range query that fell outside the active scope (or had none).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadViolation {
    pub project_id: String,
    pub start: i64,
    pub end: i64,
    pub scope: Option<AccessScope>,
}

#[derive(Debug, Default)]
struct TripwireState {
    scopes: Vec<AccessScope>,
    reads: usize,
    auxiliary_reads: usize,
    violations: Vec<ReadViolation>,
}

/// Records every range query made against an instrumented log and flags the
/// ones that read past the declared cutoff. Scopes are a single stack, so the
/// log must be read from one thread while armed.
#[derive(Debug, Default)]
pub struct Tripwire {
    state: Mutex<TripwireState>,
}

impl Tripwire {
    fn observe(&self, project_id: &str, start: i64, end: i64) {
        let mut st = self.state.lock().unwrap();
        st.reads += 1;
        let scope = st.scopes.last().cloned();
        if matches!(scope, Some(AccessScope::Auxiliary { .. })) {
            st.auxiliary_reads += 1;
        }
        let ok = scope
            .as_ref()
            .is_some_and(|s| s.permits(project_id, start, end));
        if !ok {
            st.violations.push(ReadViolation {
                project_id: project_id.to_string(),
                start,
                end,
                scope,
            });
        }
    }

    pub fn reads(&self) -> usize {
        self.state.lock().unwrap().reads
    }

    pub fn auxiliary_reads(&self) -> usize {
        self.state.lock().unwrap().auxiliary_reads
    }

    pub fn violations(&self) -> Vec<ReadViolation> {
        self.state.lock().unwrap().violations.clone()
    }
}

/// Pops the scope pushed by [`InvestmentLog::scope`] when dropped.
pub struct ScopeGuard<'a> {
    tripwire: Option<&'a Tripwire>,
}

impl Drop for ScopeGuard<'_> {
    fn drop(&mut self) {
        if let Some(tw) = self.tripwire {
            tw.state.lock().unwrap().scopes.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Project;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> ProjectCatalog {
        ["p", "q"]
            .into_iter()
            .map(|id| Project {
                id: id.into(),
                launch_time: 1_000,
                category: "c".into(),
                creator_type: "t".into(),
                currency: "USD".into(),
                declared_duration_days: 30,
                pledged_goal: 100.0,
                description: Some(String::new()),
                embedding: None,
            })
            .collect()
    }

    fn rec(id: &str, t: i64, amount: f64) -> String {
        format!(r#"{{"project_id":"{id}","timestamp":{t},"amount":{amount}}}"#)
    }

    #[test]
    fn output_is_sorted() {
        let text = [
            rec("p", 5_000, 1.0),
            rec("q", 2_000, 1.0),
            rec("p", 3_000, 2.0),
        ]
        .join("\n");
        let log = parse_investments(&text, &catalog()).value;
        let ts: Vec<i64> = log.records().iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, vec![2_000, 3_000, 5_000]);
    }

    #[test]
    fn rejects_unknown_project_and_early_records() {
        let text = [
            rec("zzz", 5_000, 1.0),
            rec("p", 999, 1.0),
            rec("p", 1_000, -1.0),
            rec("p", 1_000, 1.0),
        ]
        .join("\n");
        let ing = parse_investments(&text, &catalog());
        assert_eq!(ing.value.len(), 1);
        let reasons: Vec<&str> = ing.rejections.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(reasons, vec!["unknown project", "before launch", "amount"]);
    }

    #[test]
    fn range_query_matches_linear_scan() {
        let cat = catalog();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let records: Vec<InvestmentRecord> = (0..2_000)
            .map(|_| InvestmentRecord {
                project_id: if rng.random_bool(0.5) { "p" } else { "q" }.into(),
                timestamp: rng.random_range(1_000..200_000),
                amount: rng.random_range(0.5..50.0),
            })
            .collect();
        let log = InvestmentLog::from_records(records.clone(), &cat).value;
        for _ in 0..1_000 {
            let id = if rng.random_bool(0.5) { "p" } else { "q" };
            let a = rng.random_range(0..210_000);
            let b = a + rng.random_range(0..20_000);
            let mut expected: Vec<i64> = records
                .iter()
                .filter(|r| r.project_id == id && a <= r.timestamp && r.timestamp < b)
                .map(|r| r.timestamp)
                .collect();
            expected.sort_unstable();
            let got: Vec<i64> = log
                .pledges_in(id, a, b)
                .iter()
                .map(|p| p.timestamp)
                .collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn one_hour_range_query() {
        let cat = catalog();
        let t0 = 10_000;
        let text = [
            rec("p", t0 - 1, 1.0),
            rec("p", t0, 2.0),
            rec("p", t0 + 3_599, 4.0),
            rec("p", t0 + 3_600, 8.0),
        ]
        .join("\n");
        let log = parse_investments(&text, &cat).value;
        assert_eq!(log.amount_in("p", t0, t0 + 3_600), 6.0);
    }

    #[test]
    fn tripwire_flags_reads_past_cutoff() {
        let mut log = parse_investments(&rec("p", 2_000, 1.0), &catalog()).value;
        let tw = log.arm_tripwire();
        {
            let _g = log.scope(AccessScope::Before { cutoff: 5_000 });
            log.pledges_in("p", 0, 5_000);
            log.pledges_in("p", 0, 5_001);
        }
        log.pledges_in("p", 0, 1);
        assert_eq!(tw.reads(), 3);
        let v = tw.violations();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].end, 5_001);
        assert!(v[1].scope.is_none());
    }
}
