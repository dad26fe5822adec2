//! Seeded synthetic crowdfunding markets.
//!
//! Projects launch uniformly over the horizon. Each project draws pledges
//! from a Poisson process with rate
//!
//! ```text
//! base_intensity * s(c, launch) / (1 + competition_strength * n_c(t))
//! ```
//!
//! where `s(c, t) = 1 + A sin(2π t / period + φ_c)` is the popularity of the
//! project's category when it launched and `n_c(t)` counts the other
//! projects of the same category running at `t`. The first factor is what
//! recent launches reveal about the market's drift; the second is the
//! crowding visible among running competitors.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::market::{InvestmentLog, InvestmentRecord, Project, ProjectCatalog, DAY, HOUR};
use crate::{Error, Result};

mod window;

pub use window::{random_window, WindowShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_projects: usize,
    pub n_categories: usize,
    pub horizon_days: u32,
    /// Expected pledges per hour for an uncrowded project at mean popularity.
    pub base_intensity: f64,
    pub competition_strength: f64,
    /// Relative amplitude of the category popularity sinusoid, in `[0, 1]`.
    pub seasonality_amplitude: f64,
    pub period_days: f64,
    /// Phase offset between consecutive categories, in radians.
    pub category_phase_step: f64,
    pub goal_log_mean: f64,
    pub goal_log_sd: f64,
    pub amount_log_mean: f64,
    pub amount_log_sd: f64,
    pub min_duration_days: u32,
    pub max_duration_days: u32,
    /// Epoch seconds of the horizon start.
    pub start_time: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_projects: 60,
            n_categories: 4,
            horizon_days: 10,
            base_intensity: 2.0,
            competition_strength: 0.1,
            seasonality_amplitude: 0.6,
            period_days: 20.0,
            category_phase_step: 0.5,
            goal_log_mean: 7.5,
            goal_log_sd: 0.8,
            amount_log_mean: 3.0,
            amount_log_sd: 1.0,
            min_duration_days: 7,
            max_duration_days: 30,
            start_time: 1_600_000_000,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Invalid(format!("synthetic config: {what}")));
        if self.n_categories == 0 {
            return bad("n_categories must be positive");
        }
        if self.horizon_days == 0 {
            return bad("horizon_days must be positive");
        }
        if !(self.base_intensity >= 0.0 && self.base_intensity.is_finite()) {
            return bad("base_intensity must be a nonnegative number");
        }
        if !(self.competition_strength >= 0.0 && self.competition_strength.is_finite()) {
            return bad("competition_strength must be a nonnegative number");
        }
        if !(0.0..=1.0).contains(&self.seasonality_amplitude) {
            return bad("seasonality_amplitude must lie in [0, 1]");
        }
        if !(self.period_days > 0.0 && self.period_days.is_finite()) {
            return bad("period_days must be positive");
        }
        if !(self.goal_log_sd >= 0.0 && self.amount_log_sd >= 0.0) {
            return bad("log-normal spreads must be nonnegative");
        }
        if self.min_duration_days == 0 || self.min_duration_days > self.max_duration_days {
            return bad("durations must satisfy 1 <= min <= max");
        }
        Ok(())
    }

    /// Category popularity factor at time `t`.
    pub fn seasonal_factor(&self, category: usize, t: i64) -> f64 {
        let phase = 2.0 * PI * (t - self.start_time) as f64 / (self.period_days * DAY as f64)
            + self.category_phase_step * category as f64;
        1.0 + self.seasonality_amplitude * phase.sin()
    }

    /// Mean of one pledge amount.
    pub fn mean_amount(&self) -> f64 {
        (self.amount_log_mean + self.amount_log_sd * self.amount_log_sd / 2.0).exp()
    }
}

/// Named configurations.
pub fn presets() -> Vec<(&'static str, SynthConfig)> {
    // Short campaigns keep the running set small enough for crowding to show;
    // a common phase makes the drift visible across categories.
    let full = SynthConfig {
        n_projects: 1000,
        n_categories: 8,
        horizon_days: 90,
        base_intensity: 6.0,
        competition_strength: 0.5,
        seasonality_amplitude: 0.8,
        period_days: 30.0,
        category_phase_step: 0.0,
        goal_log_sd: 0.3,
        min_duration_days: 3,
        max_duration_days: 10,
        ..SynthConfig::default()
    };
    vec![
        ("synthetic-small", SynthConfig::default()),
        ("synthetic-full", full.clone()),
        (
            "competition-only",
            SynthConfig {
                seasonality_amplitude: 0.0,
                ..full.clone()
            },
        ),
        (
            "evolution-only",
            SynthConfig {
                competition_strength: 0.0,
                ..full
            },
        ),
    ]
}

pub fn preset(name: &str) -> Result<SynthConfig> {
    presets()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| c)
        .ok_or_else(|| Error::Invalid(format!("unknown preset {name:?}")))
}

/// Generated market plus the analytic expected first-day funding of every
/// project, in catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub catalog: ProjectCatalog,
    pub log: InvestmentLog,
    pub truth: Vec<ExpectedFunding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedFunding {
    pub project_id: String,
    /// Expected pledged amount in the first 24 hours.
    pub amount: f64,
    /// The same quantity on the label scale `log2(1 + amount / goal)`.
    pub label: f64,
}

const WORDS: [&str; 12] = [
    "smart",
    "portable",
    "handmade",
    "open",
    "community",
    "solar",
    "design",
    "film",
    "music",
    "game",
    "kit",
    "story",
];

/// Piecewise-constant count of running projects in one category.
struct Occupancy {
    /// Sorted change points and the count from each point on.
    steps: Vec<(i64, i64)>,
}

impl Occupancy {
    fn new(intervals: impl Iterator<Item = (i64, i64)>) -> Self {
        let mut events: Vec<(i64, i64)> = intervals.flat_map(|(s, e)| [(s, 1), (e, -1)]).collect();
        events.sort_unstable();
        let mut steps: Vec<(i64, i64)> = Vec::new();
        let mut count = 0;
        for (t, d) in events {
            count += d;
            match steps.last_mut() {
                Some(last) if last.0 == t => last.1 = count,
                _ => steps.push((t, count)),
            }
        }
        Occupancy { steps }
    }

    fn at(&self, t: i64) -> i64 {
        let i = self.steps.partition_point(|&(s, _)| s <= t);
        if i == 0 {
            0
        } else {
            self.steps[i - 1].1
        }
    }

    /// Integral of `1 / (1 + k * (count(t) - 1))` over `[a, b)` in hours, for
    /// a project that is itself running throughout.
    fn integrate_inverse(&self, a: i64, b: i64, k: f64) -> f64 {
        let mut total = 0.0;
        let mut t = a;
        let mut i = self.steps.partition_point(|&(s, _)| s <= a);
        while t < b {
            let next = self.steps.get(i).map_or(b, |&(s, _)| s.min(b));
            let others = (self.at(t) - 1).max(0) as f64;
            total += (next - t) as f64 / HOUR as f64 / (1.0 + k * others);
            t = next;
            i += 1;
        }
        total
    }
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticMarket> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let goal = LogNormal::new(config.goal_log_mean, config.goal_log_sd)
        .map_err(|e| Error::Invalid(format!("goal distribution: {e}")))?;
    let amount = LogNormal::new(config.amount_log_mean, config.amount_log_sd)
        .map_err(|e| Error::Invalid(format!("amount distribution: {e}")))?;
    let horizon = i64::from(config.horizon_days) * DAY;

    let mut projects = Vec::with_capacity(config.n_projects);
    let mut categories = Vec::with_capacity(config.n_projects);
    for i in 0..config.n_projects {
        let c = rng.random_range(0..config.n_categories);
        let words: Vec<&str> = (0..6)
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect();
        projects.push(Project {
            id: format!("p{i:05}"),
            launch_time: config.start_time + rng.random_range(0..horizon),
            category: format!("cat{c}"),
            creator_type: ["individual", "company"][rng.random_range(0..2)].to_string(),
            currency: ["USD", "EUR", "GBP"][rng.random_range(0..3)].to_string(),
            declared_duration_days: rng
                .random_range(config.min_duration_days..=config.max_duration_days),
            pledged_goal: (goal.sample(&mut rng) * 100.0).round() / 100.0 + 1.0,
            description: Some(format!("cat{c} {}", words.join(" "))),
            embedding: None,
        });
        categories.push(c);
    }

    let occupancy: Vec<Occupancy> = (0..config.n_categories)
        .map(|c| {
            Occupancy::new(
                projects
                    .iter()
                    .zip(&categories)
                    .filter(|(_, &pc)| pc == c)
                    .map(|(p, _)| (p.launch_time, p.end_time())),
            )
        })
        .collect();

    let k = config.competition_strength;
    let mut records = Vec::new();
    let mut truth = Vec::with_capacity(projects.len());
    for (i, (p, &c)) in projects.iter().zip(&categories).enumerate() {
        let peak = config.base_intensity * config.seasonal_factor(c, p.launch_time);
        let occ = &occupancy[c];
        let first_day = occ.integrate_inverse(p.launch_time, p.launch_time + DAY, k);
        let expected = peak * first_day * config.mean_amount();
        truth.push(ExpectedFunding {
            project_id: p.id.clone(),
            amount: expected,
            label: crate::features::label_from_amount(expected, p.pledged_goal),
        });

        if peak <= 0.0 {
            continue;
        }
        let mut sub = ChaCha8Rng::seed_from_u64(config.seed);
        sub.set_stream(i as u64 + 1);
        let gap = Exp::new(peak).map_err(|e| Error::Invalid(format!("intensity: {e}")))?;
        let mut t = p.launch_time as f64;
        loop {
            t += gap.sample(&mut sub) * HOUR as f64;
            let ts = t.floor() as i64;
            if ts >= p.end_time() {
                break;
            }
            let others = (occ.at(ts) - 1).max(0) as f64;
            if sub.random::<f64>() * (1.0 + k * others) < 1.0 {
                records.push(InvestmentRecord {
                    project_id: p.id.clone(),
                    timestamp: ts,
                    amount: (amount.sample(&mut sub) * 100.0).round() / 100.0 + 0.01,
                });
            }
        }
    }

    let catalog: ProjectCatalog = projects.into_iter().collect();
    let ingested = InvestmentLog::from_records(records, &catalog);
    if let Some(r) = ingested.rejections.first() {
        return Err(Error::Invalid(format!(
            "generator produced an invalid record: {r}"
        )));
    }
    Ok(SyntheticMarket {
        catalog,
        log: ingested.value,
        truth,
    })
}

/// File names written by [`write_market`].
pub const PROJECTS_FILE: &str = "projects.jsonl";
pub const INVESTMENTS_FILE: &str = "investments.jsonl";
pub const TRUTH_FILE: &str = "truth.jsonl";

fn jsonl<T: Serialize>(items: impl Iterator<Item = T>) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes the catalog, log and truth as JSON lines into `dir`; returns the
/// written paths.
pub fn write_market(market: &SyntheticMarket, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (PROJECTS_FILE, jsonl(market.catalog.iter())?),
        (INVESTMENTS_FILE, jsonl(market.log.records().iter())?),
        (TRUTH_FILE, jsonl(market.truth.iter())?),
    ];
    let mut paths = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
