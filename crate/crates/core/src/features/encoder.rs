use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TextHasher;
use crate::market::{Project, EMBEDDING_DIM};
use crate::{Error, Result};

/// Version tag written into `encoder.json`.
pub const ENCODER_VERSION: u32 = 1;

const GOAL_BUCKETS: usize = 16;
const GOAL_RANGE_LOG10: (f64, f64) = (1.0, 6.0);

/// Bucket edges for the discretised numeric fields. All buckets are
/// half-open `[low, high)`, with the outermost buckets unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    /// Interior edges of the goal buckets (15 edges, 16 buckets).
    pub goal_edges: Vec<f64>,
    /// Interior edges of the duration buckets, in days.
    pub duration_edges: Vec<u32>,
}

impl Default for BucketSpec {
    fn default() -> Self {
        let (lo, hi) = GOAL_RANGE_LOG10;
        let goal_edges = (1..GOAL_BUCKETS)
            .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / GOAL_BUCKETS as f64))
            .collect();
        BucketSpec {
            goal_edges,
            duration_edges: vec![16, 31, 61],
        }
    }
}

impl BucketSpec {
    pub fn goal_bucket(&self, goal: f64) -> usize {
        self.goal_edges.partition_point(|&e| e <= goal)
    }

    pub fn duration_bucket(&self, days: u32) -> usize {
        self.duration_edges.partition_point(|&e| e <= days)
    }

    pub fn goal_buckets(&self) -> usize {
        self.goal_edges.len() + 1
    }

    pub fn duration_buckets(&self) -> usize {
        self.duration_edges.len() + 1
    }
}

/// Sorted value lists for each categorical field. Index `len()` of each block
/// is the reserved "unknown" slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryVocabularies {
    pub category: Vec<String>,
    pub creator_type: Vec<String>,
    pub currency: Vec<String>,
}

fn sorted_unique<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<String> = values.map(str::to_string).collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn slot(vocab: &[String], value: &str) -> usize {
    vocab
        .binary_search_by(|v| v.as_str().cmp(value))
        .unwrap_or(vocab.len())
}

impl CategoryVocabularies {
    pub fn fit<'a>(projects: impl IntoIterator<Item = &'a Project> + Clone) -> Self {
        CategoryVocabularies {
            category: sorted_unique(projects.clone().into_iter().map(|p| p.category.as_str())),
            creator_type: sorted_unique(
                projects
                    .clone()
                    .into_iter()
                    .map(|p| p.creator_type.as_str()),
            ),
            currency: sorted_unique(projects.into_iter().map(|p| p.currency.as_str())),
        }
    }
}

/// Block positions inside a static feature vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    pub category: Range<usize>,
    pub creator_type: Range<usize>,
    pub currency: Range<usize>,
    pub duration: Range<usize>,
    pub goal: Range<usize>,
    pub text: Range<usize>,
}

impl FeatureLayout {
    pub fn dim(&self) -> usize {
        self.text.end
    }

    /// The one-hot blocks, in layout order.
    pub fn one_hot_blocks(&self) -> [Range<usize>; 5] {
        [
            self.category.clone(),
            self.creator_type.clone(),
            self.currency.clone(),
            self.duration.clone(),
            self.goal.clone(),
        ]
    }
}

/// A project's static feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticFeature(pub Vec<f64>);

/// Everything needed to turn a project into its static feature vector. Fit on
/// the training split, then frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub version: u32,
    pub vocab: CategoryVocabularies,
    pub buckets: BucketSpec,
    pub text: TextHasher,
}

impl Encoder {
    pub fn fit<'a>(training: impl IntoIterator<Item = &'a Project> + Clone) -> Self {
        Encoder {
            version: ENCODER_VERSION,
            vocab: CategoryVocabularies::fit(training.clone()),
            buckets: BucketSpec::default(),
            text: TextHasher::fit(
                training
                    .into_iter()
                    .filter_map(|p| p.description.as_deref()),
            ),
        }
    }

    pub fn layout(&self) -> FeatureLayout {
        let mut at = 0;
        let mut block = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        FeatureLayout {
            category: block(self.vocab.category.len() + 1),
            creator_type: block(self.vocab.creator_type.len() + 1),
            currency: block(self.vocab.currency.len() + 1),
            duration: block(self.buckets.duration_buckets()),
            goal: block(self.buckets.goal_buckets()),
            text: block(EMBEDDING_DIM),
        }
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    pub fn encode(&self, project: &Project) -> StaticFeature {
        let layout = self.layout();
        let mut v = vec![0.0; layout.dim()];
        v[layout.category.start + slot(&self.vocab.category, &project.category)] = 1.0;
        v[layout.creator_type.start + slot(&self.vocab.creator_type, &project.creator_type)] = 1.0;
        v[layout.currency.start + slot(&self.vocab.currency, &project.currency)] = 1.0;
        v[layout.duration.start + self.buckets.duration_bucket(project.declared_duration_days)] =
            1.0;
        v[layout.goal.start + self.buckets.goal_bucket(project.pledged_goal)] = 1.0;
        let text = match (&project.embedding, &project.description) {
            (Some(e), _) => e.clone(),
            (None, Some(d)) => self.text.embed(d),
            (None, None) => vec![0.0; EMBEDDING_DIM],
        };
        v[layout.text].copy_from_slice(&text);
        StaticFeature(v)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let enc: Encoder = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if enc.version != ENCODER_VERSION {
            return Err(Error::Schema(format!(
                "encoder version {} (expected {ENCODER_VERSION})",
                enc.version
            )));
        }
        Ok(enc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn project(id: &str, category: &str, goal: f64, days: u32) -> Project {
        Project {
            id: id.into(),
            launch_time: 0,
            category: category.into(),
            creator_type: "individual".into(),
            currency: "USD".into(),
            declared_duration_days: days,
            pledged_goal: goal,
            description: Some("solar lamp for camping".into()),
            embedding: None,
        }
    }

    fn training() -> Vec<Project> {
        ["tech", "art", "food"]
            .iter()
            .enumerate()
            .map(|(i, c)| project(&i.to_string(), c, 1000.0, 30))
            .collect()
    }

    #[test]
    fn category_change_is_block_local() {
        let enc = Encoder::fit(&training());
        let layout = enc.layout();
        let a = enc.encode(&project("a", "tech", 5000.0, 20));
        let b = enc.encode(&project("b", "art", 5000.0, 20));
        for i in 0..layout.dim() {
            if !layout.category.contains(&i) {
                assert_eq!(a.0[i], b.0[i]);
            }
        }
        assert_ne!(a.0[layout.category.clone()], b.0[layout.category.clone()]);
    }

    #[test]
    fn unseen_category_uses_unknown_slot() {
        let enc = Encoder::fit(&training());
        let layout = enc.layout();
        let v = enc.encode(&project("x", "games", 10.0, 1));
        assert_eq!(v.0[layout.category.end - 1], 1.0);
    }

    #[test]
    fn goal_at_edge_goes_up() {
        let spec = BucketSpec::default();
        assert_eq!(spec.goal_buckets(), 16);
        for (k, &edge) in spec.goal_edges.iter().enumerate() {
            assert_eq!(spec.goal_bucket(edge), k + 1);
            assert_eq!(spec.goal_bucket(edge * (1.0 - 1e-12)), k);
        }
        assert_eq!(spec.goal_bucket(1.0), 0);
        assert_eq!(spec.goal_bucket(1e9), 15);
    }

    #[test]
    fn duration_buckets() {
        let spec = BucketSpec::default();
        let got: Vec<usize> = [1, 15, 16, 30, 31, 60, 61, 90]
            .iter()
            .map(|&d| spec.duration_bucket(d))
            .collect();
        assert_eq!(got, vec![0, 0, 1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn supplied_embedding_takes_precedence() {
        let enc = Encoder::fit(&training());
        let mut p = project("e", "tech", 10.0, 1);
        p.embedding = Some((0..EMBEDDING_DIM).map(|i| i as f64).collect());
        let v = enc.encode(&p);
        assert_eq!(v.0[enc.layout().text][7], 7.0);
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let enc = Encoder::fit(&training());
        let path = dir.path().join("encoder.json");
        enc.save(&path).unwrap();
        assert_eq!(Encoder::load(&path).unwrap(), enc);
    }
}
