use serde::{Deserialize, Serialize};

use super::{ProjectCatalog, TargetSet, HOUR, HOURS_PER_DAY};
use crate::{Error, Result};

/// Longest supported history, in days.
pub const MAX_HISTORY_DAYS: u32 = 7;

/// What the market looks like from a target set's reference time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketWindow {
    pub target_set: TargetSet,
    /// Projects live at the reference time (targets excluded), ordered by
    /// launch time then id.
    pub running_ids: Vec<String>,
    /// Projects launched strictly between one day and `history_days` days
    /// before the reference time, same ordering.
    pub observable_ids: Vec<String>,
    pub history_days: u32,
}

impl MarketWindow {
    /// Hours per day used by the observability bounds.
    pub const N_H: i64 = HOURS_PER_DAY;
    /// Observation interval, one hour.
    pub const DELTA: i64 = HOUR;

    pub fn reference_time(&self) -> i64 {
        self.target_set.reference_time
    }

    pub fn targets(&self) -> &[String] {
        &self.target_set.target_ids
    }
}

/// Whether a project launched at `launch` is observable from `reference`:
/// its first day finished before `reference` and it launched within the
/// history horizon.
pub(crate) fn is_observable(launch: i64, reference: i64, history_days: u32) -> bool {
    let gap = reference - launch;
    MarketWindow::N_H * MarketWindow::DELTA < gap
        && gap < MarketWindow::N_H * i64::from(history_days) * MarketWindow::DELTA
}

/// Computes the running and observable sets for a target set.
pub fn window_for(
    target_set: &TargetSet,
    catalog: &ProjectCatalog,
    history_days: u32,
) -> Result<MarketWindow> {
    if !(1..=MAX_HISTORY_DAYS).contains(&history_days) {
        return Err(Error::Invalid(format!(
            "history days must be in 1..={MAX_HISTORY_DAYS}, got {history_days}"
        )));
    }
    let t_ref = target_set.reference_time;
    let mut running = Vec::new();
    let mut observable = Vec::new();
    for p in catalog.iter() {
        if target_set.target_ids.contains(&p.id) {
            continue;
        }
        if p.launch_time <= t_ref && t_ref < p.end_time() {
            running.push((p.launch_time, p.id.clone()));
        }
        if is_observable(p.launch_time, t_ref, history_days) {
            observable.push((p.launch_time, p.id.clone()));
        }
    }
    running.sort_unstable();
    observable.sort_unstable();
    Ok(MarketWindow {
        target_set: target_set.clone(),
        running_ids: running.into_iter().map(|(_, id)| id).collect(),
        observable_ids: observable.into_iter().map(|(_, id)| id).collect(),
        history_days,
    })
}
