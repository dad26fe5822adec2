use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ProjectCatalog, DAY, HOUR};
use crate::{Error, Result};

/// Number of day periods.
pub const PERIOD_COUNT: u8 = 6;

/// A fixed UTC offset in seconds (east positive).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtcOffset(pub i32);

impl UtcOffset {
    pub const UTC: UtcOffset = UtcOffset(0);

    fn local(self, timestamp: i64) -> i64 {
        timestamp + i64::from(self.0)
    }
}

/// Maps a timestamp to its day period in the given offset. Periods are
/// half-open local-hour ranges: [8,12) → 0, [12,14) → 1, [14,17) → 2,
/// [17,20) → 3, [20,24) → 4, [0,8) → 5.
pub fn day_period_of(timestamp: i64, offset: UtcOffset) -> u8 {
    let hour = offset.local(timestamp).rem_euclid(DAY) / HOUR;
    match hour {
        8..=11 => 0,
        12..=13 => 1,
        14..=16 => 2,
        17..=19 => 3,
        20..=23 => 4,
        _ => 5,
    }
}

/// Local calendar day number (days since the epoch in the given offset).
pub fn local_day(timestamp: i64, offset: UtcOffset) -> i64 {
    offset.local(timestamp).div_euclid(DAY)
}

/// Projects planned to launch in the same calendar day and period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSet {
    /// Ordered by launch time, then id.
    pub target_ids: Vec<String>,
    pub period_id: u8,
    /// Earliest launch time among the targets; everything the model sees for
    /// this set is frozen at this instant.
    pub reference_time: i64,
}

/// Partitions the catalog by (local day, period) of launch, ordered by
/// reference time.
pub fn build_target_sets(catalog: &ProjectCatalog, offset: UtcOffset) -> Vec<TargetSet> {
    let mut groups: BTreeMap<(i64, u8), Vec<(i64, &str)>> = BTreeMap::new();
    for p in catalog.iter() {
        let key = (
            local_day(p.launch_time, offset),
            day_period_of(p.launch_time, offset),
        );
        groups.entry(key).or_default().push((p.launch_time, &p.id));
    }
    let mut sets: Vec<TargetSet> = groups
        .into_iter()
        .map(|((_, period_id), mut members)| {
            members.sort_unstable();
            TargetSet {
                reference_time: members[0].0,
                target_ids: members.into_iter().map(|(_, id)| id.to_string()).collect(),
                period_id,
            }
        })
        .collect();
    sets.sort_by_key(|s| s.reference_time);
    sets
}

/// Train:test proportion for [`chronological_split`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub test: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio { train: 5, test: 1 }
    }
}

/// Splits time-ordered target sets: the first `ceil(n * train / (train + test))`
/// go to training (capped at `n - 1` so the test side is never empty).
pub fn chronological_split(
    sets: &[TargetSet],
    ratio: SplitRatio,
) -> Result<(Vec<TargetSet>, Vec<TargetSet>)> {
    let n = sets.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 target sets to split, got {n}"
        )));
    }
    if ratio.train == 0 || ratio.test == 0 {
        return Err(Error::Invalid("split ratio parts must be positive".into()));
    }
    if sets
        .windows(2)
        .any(|w| w[0].reference_time > w[1].reference_time)
    {
        return Err(Error::Invalid("target sets are not in time order".into()));
    }
    let total = u64::from(ratio.train + ratio.test);
    let n_train = (n as u64 * u64::from(ratio.train)).div_ceil(total) as usize;
    let n_train = n_train.min(n - 1);
    Ok((sets[..n_train].to_vec(), sets[n_train..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Project;

    const DAY0: i64 = 1_600_000_000 - 1_600_000_000 % DAY;

    fn hm(h: i64, m: i64) -> i64 {
        DAY0 + h * HOUR + m * 60
    }

    fn project(id: &str, t: i64) -> Project {
        Project {
            id: id.into(),
            launch_time: t,
            category: "c".into(),
            creator_type: "t".into(),
            currency: "USD".into(),
            declared_duration_days: 30,
            pledged_goal: 100.0,
            description: Some(String::new()),
            embedding: None,
        }
    }

    #[test]
    fn periods() {
        assert_eq!(day_period_of(hm(9, 30), UtcOffset::UTC), 0);
        assert_eq!(day_period_of(hm(0, 0), UtcOffset::UTC), 5);
        assert_eq!(day_period_of(hm(12, 0), UtcOffset::UTC), 1);
        assert_eq!(day_period_of(hm(11, 59), UtcOffset::UTC), 0);
        assert_eq!(day_period_of(hm(16, 59), UtcOffset::UTC), 2);
        assert_eq!(day_period_of(hm(17, 0), UtcOffset::UTC), 3);
        assert_eq!(day_period_of(hm(20, 0), UtcOffset::UTC), 4);
        assert_eq!(day_period_of(hm(23, 59), UtcOffset::UTC), 4);
        assert_eq!(day_period_of(hm(7, 59), UtcOffset::UTC), 5);
        // 07:00 UTC is 09:00 at +02:00.
        assert_eq!(day_period_of(hm(7, 0), UtcOffset(2 * 3600)), 0);
        assert_eq!(day_period_of(-1, UtcOffset::UTC), 4);
    }

    #[test]
    fn same_period_groups_together() {
        let cat: ProjectCatalog = [project("b", hm(11, 0)), project("a", hm(9, 0))]
            .into_iter()
            .collect();
        let sets = build_target_sets(&cat, UtcOffset::UTC);
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].reference_time, hm(9, 0));
        assert_eq!(sets[0].target_ids, vec!["a", "b"]);
        assert_eq!(sets[0].period_id, 0);
    }

    #[test]
    fn period_boundary_splits_groups() {
        let cat: ProjectCatalog = [project("a", hm(11, 59)), project("b", hm(12, 1))]
            .into_iter()
            .collect();
        let sets = build_target_sets(&cat, UtcOffset::UTC);
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].target_ids, vec!["a"]);
        assert_eq!(sets[1].target_ids, vec!["b"]);
    }

    #[test]
    fn singleton_set() {
        let cat: ProjectCatalog = [project("a", hm(3, 0))].into_iter().collect();
        let sets = build_target_sets(&cat, UtcOffset::UTC);
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].reference_time, hm(3, 0));
    }

    #[test]
    fn same_period_on_different_days_differs() {
        let cat: ProjectCatalog = [project("a", hm(9, 0)), project("b", hm(9, 0) + DAY)]
            .into_iter()
            .collect();
        assert_eq!(build_target_sets(&cat, UtcOffset::UTC).len(), 2);
    }

    fn sets(n: usize) -> Vec<TargetSet> {
        (0..n)
            .map(|i| TargetSet {
                target_ids: vec![i.to_string()],
                period_id: 0,
                reference_time: i as i64 * DAY,
            })
            .collect()
    }

    #[test]
    fn split_sizes() {
        let r = SplitRatio::default();
        for (n, train) in [(6, 5), (12, 10), (7, 6), (2, 1)] {
            let (a, b) = chronological_split(&sets(n), r).unwrap();
            assert_eq!((a.len(), b.len()), (train, n - train), "n = {n}");
            assert!(a.last().unwrap().reference_time < b[0].reference_time);
        }
        assert!(chronological_split(&sets(1), r).is_err());
    }
}
