use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::features::SERIES_LEN;
use crate::model::{WindowInputs, HISTORY_STEPS};
use crate::nn::Tensor;
use crate::Result;

/// Sizes of a randomly filled window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowShape {
    pub targets: usize,
    pub competitors: usize,
    /// Non-root tree nodes.
    pub tree_nodes: usize,
    pub history: usize,
    pub feature_dim: usize,
    pub t_h: u32,
}

impl Default for WindowShape {
    fn default() -> Self {
        WindowShape {
            targets: 5,
            competitors: 6,
            tree_nodes: 8,
            history: 7,
            feature_dim: 6,
            t_h: 3,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("shape by construction")
}

/// A window with standard-normal inputs, random adjacency, a random forest
/// hanging off the targets and positive labels. Intended for tests of the
/// network in isolation from market data.
pub fn random_window(shape: WindowShape, seed: u64) -> Result<WindowInputs> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let WindowShape {
        targets: g,
        competitors: c,
        tree_nodes: n,
        history: p,
        feature_dim: m,
        t_h,
    } = shape;
    let adjacency = (0..g * c).map(|_| rng.random_bool(0.6)).collect();
    let mut tree_x = normal(&mut rng, g + n, m + 1);
    for row in 0..g {
        tree_x.set(row, m, 0.0);
    }
    let mut tree_children = vec![Vec::new(); g + n];
    for node in g..g + n {
        let parent = rng.random_range(0..node);
        tree_children[parent].push(node);
    }
    let published = (0..p.min(HISTORY_STEPS))
        .map(|_| normal(&mut rng, 1, m + 1).into_vec())
        .collect();
    Ok(WindowInputs {
        reference_time: 0,
        history_days: t_h,
        target_ids: (0..g).map(|i| format!("t{i}")).collect(),
        target_x: normal(&mut rng, g, m),
        labels: Some((0..g).map(|_| rng.random_range(0.05..1.5)).collect()),
        competitor_ids: (0..c).map(|i| format!("c{i}")).collect(),
        competitor_x: normal(&mut rng, c, m),
        competitor_series: normal(&mut rng, c, SERIES_LEN),
        adjacency,
        aux_targets: Some((0..c).map(|_| rng.random_range(0.0..8.0)).collect()),
        tree_x,
        tree_children,
        history_x: normal(&mut rng, p, m + 1),
        running_series_mean: normal(&mut rng, 1, SERIES_LEN).into_vec(),
        published,
    })
}
