use serde::{Deserialize, Serialize};

use crate::market::{AccessScope, InvestmentLog, Project, DAY, HOUR};

/// Number of hourly buckets in a funding series.
pub const SERIES_LEN: usize = 24;

/// Log-scaled hourly pledge totals over the day before a reference time.
/// `values[0]` is the most recent hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries(pub [f64; SERIES_LEN]);

impl HourlySeries {
    pub fn values(&self) -> &[f64; SERIES_LEN] {
        &self.0
    }
}

/// `log2(1 + alpha / goal)`.
pub fn label_from_amount(alpha: f64, goal: f64) -> f64 {
    (1.0 + alpha / goal).log2()
}

/// Early fundraising performance: first-day funding relative to the goal.
pub fn compute_label(project: &Project, log: &InvestmentLog) -> f64 {
    let start = project.launch_time;
    let end = start + DAY;
    let _scope = log.scope(AccessScope::Label {
        project_id: project.id.clone(),
        start,
        end,
    });
    label_from_amount(log.amount_in(&project.id, start, end), project.pledged_goal)
}

/// Hourly series ending at `reference`: bucket `k` sums pledges with
/// `reference - (k+1)h <= t < reference - kh`, then maps through `log2(1 + x)`.
pub fn hourly_series(project_id: &str, log: &InvestmentLog, reference: i64) -> HourlySeries {
    let mut sums = [0.0; SERIES_LEN];
    for p in log.pledges_in(project_id, reference - SERIES_LEN as i64 * HOUR, reference) {
        let k = ((reference - p.timestamp - 1) / HOUR) as usize;
        sums[k] += p.amount;
    }
    HourlySeries(sums.map(|s| (1.0 + s).log2()))
}

/// `log2(1 + funding in the first day after launch)`.
pub fn early_funding(project: &Project, log: &InvestmentLog) -> f64 {
    let start = project.launch_time;
    (1.0 + log.amount_in(&project.id, start, start + DAY)).log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{InvestmentRecord, ProjectCatalog};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const T0: i64 = 1_650_000_000;

    fn project(id: &str, goal: f64) -> Project {
        Project {
            id: id.into(),
            launch_time: T0,
            category: "c".into(),
            creator_type: "t".into(),
            currency: "USD".into(),
            declared_duration_days: 30,
            pledged_goal: goal,
            description: Some(String::new()),
            embedding: None,
        }
    }

    fn log_of(p: &Project, recs: &[(i64, f64)]) -> InvestmentLog {
        let cat: ProjectCatalog = [p.clone()].into_iter().collect();
        InvestmentLog::from_records(
            recs.iter().map(|&(t, a)| InvestmentRecord {
                project_id: p.id.clone(),
                timestamp: t,
                amount: a,
            }),
            &cat,
        )
        .value
    }

    #[test]
    fn label_identities() {
        let p = project("p", 40.0);
        assert_eq!(compute_label(&p, &log_of(&p, &[])), 0.0);
        assert_eq!(
            compute_label(&p, &log_of(&p, &[(T0 + 10, 15.0), (T0 + 99, 25.0)])),
            1.0
        );
        assert_eq!(compute_label(&p, &log_of(&p, &[(T0, 120.0)])), 2.0);
        // Pledges after the first day do not count.
        assert_eq!(compute_label(&p, &log_of(&p, &[(T0 + DAY, 120.0)])), 0.0);
    }

    #[test]
    fn label_is_monotone_in_amount() {
        let mut prev = label_from_amount(0.0, 17.0);
        assert_eq!(prev, 0.0);
        for i in 1..200 {
            let y = label_from_amount(f64::from(i) * 0.37, 17.0);
            assert!(y >= prev);
            prev = y;
        }
    }

    #[test]
    fn empty_series_is_zero() {
        let p = project("p", 1.0);
        let s = hourly_series("p", &log_of(&p, &[]), T0 + DAY);
        assert_eq!(s.0, [0.0; SERIES_LEN]);
    }

    #[test]
    fn single_recent_pledge() {
        let p = project("p", 1.0);
        let t_ref = T0 + 2 * DAY;
        let s = hourly_series("p", &log_of(&p, &[(t_ref - 1800, 7.0)]), t_ref);
        assert_eq!(s.0[0], 3.0);
        assert!(s.0[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn series_matches_linear_scan() {
        let p = project("p", 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let recs: Vec<(i64, f64)> = (0..500)
            .map(|_| {
                (
                    T0 + rng.random_range(0..3 * DAY),
                    rng.random_range(0.1..30.0),
                )
            })
            .collect();
        let log = log_of(&p, &recs);
        for _ in 0..50 {
            let t_ref = T0 + rng.random_range(0..4 * DAY);
            let s = hourly_series("p", &log, t_ref);
            for k in 0..SERIES_LEN as i64 {
                let sum: f64 = recs
                    .iter()
                    .filter(|&&(t, _)| t_ref - (k + 1) * HOUR <= t && t < t_ref - k * HOUR)
                    .map(|&(_, a)| a)
                    .sum();
                let expected = (1.0 + sum).log2();
                assert!((s.0[k as usize] - expected).abs() <= 1e-12 * expected.max(1.0));
            }
        }
    }

    #[test]
    fn early_funding_bounds() {
        let p = project("p", 1.0);
        assert_eq!(early_funding(&p, &log_of(&p, &[])), 0.0);
        assert_eq!(
            early_funding(&p, &log_of(&p, &[(T0 + 5 * HOUR, 15.0)])),
            4.0
        );
        assert_eq!(early_funding(&p, &log_of(&p, &[(T0 + DAY, 15.0)])), 0.0);
    }
}
