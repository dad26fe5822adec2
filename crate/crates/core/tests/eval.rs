use std::collections::HashMap;

use gme_core::eval::{
    aggregate, format_table, metrics, run_matrix, score_predictions, to_csv, ConstantMean, Grid,
    LstmBaseline, MarketSplit, MlpBaseline, Regressor, Variant,
};
use gme_core::graph::PruningMode;
use gme_core::market::{SplitRatio, UtcOffset};
use gme_core::model::{Ablation, TrainConfig, WindowInputs, HISTORY_STEPS};
use gme_core::nn::Tensor;
use gme_core::synth::{generate, preset, random_window, SyntheticMarket, WindowShape};
use proptest::prelude::*;

#[test]
fn metrics_match_hand_computed_values() {
    let m = metrics(&[1.0, 2.0], &[0.0, 4.0]).unwrap();
    assert_eq!(m.mae, 1.5);
    assert!((m.rmse - 2.5f64.sqrt()).abs() < 1e-15);
    assert_eq!(m.n, 2);
    assert!(metrics(&[], &[]).is_err());
    assert!(metrics(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn weighted_aggregate_uses_target_counts() {
    let preds = vec![vec![0.0], vec![1.0, 1.0, 1.0]];
    let labels = vec![vec![4.0], vec![0.0, 0.0, 0.0]];
    let a = aggregate(&preds, &labels).unwrap();
    assert_eq!(a.weighted.mae, (4.0 + 3.0) / 4.0);
    assert_eq!(a.weighted.rmse, (4.0 + 3.0) / 4.0);
    assert_eq!(a.pooled.rmse, (19.0f64 / 4.0).sqrt());
    assert_eq!(a.per_window.len(), 2);
}

proptest! {
    #[test]
    fn mae_never_exceeds_rmse(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40)) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = metrics(&p, &y).unwrap();
        let worst = p.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(m.mae <= m.rmse + 1e-12);
        prop_assert!(m.rmse <= worst + 1e-12);
    }

    #[test]
    fn weighted_mae_equals_pooled_mae(
        windows in prop::collection::vec(prop::collection::vec((0.0f64..3.0, 0.0f64..3.0), 1..6), 1..8)
    ) {
        let preds: Vec<Vec<f64>> = windows.iter().map(|w| w.iter().map(|p| p.0).collect()).collect();
        let labels: Vec<Vec<f64>> = windows.iter().map(|w| w.iter().map(|p| p.1).collect()).collect();
        let a = aggregate(&preds, &labels).unwrap();
        prop_assert!((a.weighted.mae - a.pooled.mae).abs() < 1e-12);
        prop_assert!(a.weighted.rmse <= a.pooled.rmse + 1e-12);
    }
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::all() {
        assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Variant>(&json).unwrap(), v);
    }
    assert_eq!(Variant::all().len(), 8);
    assert!("gme-x".parse::<Variant>().is_err());
}

#[test]
fn mlp_pools_history_without_regard_to_order() {
    let w = random_window(WindowShape::default(), 3).unwrap();
    let mut p = w.clone();
    let rows: Vec<Vec<f64>> = (0..w.history_x.rows())
        .rev()
        .map(|i| w.history_x.row_slice(i).to_vec())
        .collect();
    p.history_x = Tensor::from_rows(&rows, w.history_x.cols()).unwrap();
    let a = MlpBaseline::input_rows(&w).unwrap();
    let b = MlpBaseline::input_rows(&p).unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-12);
    }
    let m = w.feature_dim();
    assert_eq!(a.cols(), 2 * m + 25);
    assert_eq!(a.rows(), w.n_targets());
}

#[test]
fn mlp_handles_an_empty_history() {
    let shape = WindowShape {
        history: 0,
        ..WindowShape::default()
    };
    let w = random_window(shape, 4).unwrap();
    let rows = MlpBaseline::input_rows(&w).unwrap();
    let m = w.feature_dim();
    for g in 0..w.n_targets() {
        assert!(rows.row_slice(g)[m + 24..].iter().all(|&v| v == 0.0));
    }
    let model = MlpBaseline::new(m, 8, 0.3, 0).unwrap();
    let pred = model.predict(&w).unwrap();
    assert_eq!(pred.len(), w.n_targets());
    assert!(pred.iter().all(|&y| y >= 0.0));
}

#[test]
fn lstm_steps_are_left_padded() {
    let mut w = random_window(WindowShape::default(), 5).unwrap();
    let width = w.feature_dim() + 1;
    w.published = vec![vec![1.0; width], vec![2.0; width]];
    let steps = LstmBaseline::steps(&w).unwrap();
    assert_eq!(steps.len(), HISTORY_STEPS);
    assert!(steps[..HISTORY_STEPS - 2]
        .iter()
        .all(|s| s.iter().all(|&v| v == 0.0)));
    assert_eq!(steps[HISTORY_STEPS - 1], vec![2.0; width]);
    w.published = vec![vec![0.0; width]; HISTORY_STEPS + 1];
    assert!(LstmBaseline::steps(&w).is_err());
}

#[test]
fn constant_mean_predicts_the_mean_training_label() {
    let mut a = random_window(WindowShape::default(), 1).unwrap();
    let mut b = random_window(WindowShape::default(), 2).unwrap();
    a.labels = Some(vec![1.0; a.n_targets()]);
    b.labels = Some(
        vec![0.0; b.n_targets() - 1]
            .into_iter()
            .chain([5.0])
            .collect(),
    );
    let n = (a.n_targets() + b.n_targets()) as f64;
    let model = ConstantMean::fit(&[a.clone(), b]).unwrap();
    assert!((model.value - (a.n_targets() as f64 + 5.0) / n).abs() < 1e-12);
    assert_eq!(model.predict(&a), vec![model.value; a.n_targets()]);
}

fn small() -> (SyntheticMarket, MarketSplit) {
    let market = generate(&preset("synthetic-small").unwrap()).unwrap();
    let split = MarketSplit::new(
        &market.catalog,
        &market.log,
        UtcOffset::default(),
        SplitRatio::default(),
    )
    .unwrap();
    (market, split)
}

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        hidden: 6,
        ..TrainConfig::default()
    }
}

#[test]
fn competition_only_model_does_not_depend_on_history_length() {
    let (market, split) = small();
    let grid = Grid {
        t_h: vec![1, 4],
        pruning: vec![PruningMode::CateJf],
    };
    let variants = [Variant::Gme(Ablation::GmeC), Variant::Gme(Ablation::GmeH)];
    let r = run_matrix(
        &market.catalog,
        &market.log,
        &split,
        &variants,
        &grid,
        &quick(),
        1,
    )
    .unwrap();
    assert_eq!(r.len(), 4);
    assert_eq!((r[0].variant.as_str(), r[0].t_h), ("gme-c", 1));
    assert_eq!((r[2].variant.as_str(), r[2].t_h), ("gme-c", 4));
    assert_eq!(r[0].weighted, r[2].weighted);
    assert_ne!(r[1].weighted, r[3].weighted);
}

#[test]
fn grid_reports_respect_mae_below_rmse_and_render() {
    let (market, split) = small();
    let grid = Grid {
        t_h: vec![2],
        pruning: vec![PruningMode::OnlyCate, PruningMode::Unpruned],
    };
    let variants = [
        Variant::Gme(Ablation::Full),
        Variant::Mlp,
        Variant::Lstm,
        Variant::ConstantMean,
    ];
    let reports = run_matrix(
        &market.catalog,
        &market.log,
        &split,
        &variants,
        &grid,
        &quick(),
        2,
    )
    .unwrap();
    assert_eq!(reports.len(), 8);
    assert_eq!(reports[0].pruning, PruningMode::OnlyCate);
    for r in &reports {
        assert!(r.weighted.mae <= r.weighted.rmse + 1e-12, "{}", r.variant);
        assert!(r.pooled.mae <= r.pooled.rmse + 1e-12, "{}", r.variant);
        assert!(r.per_window.iter().all(|w| w.mae <= w.rmse + 1e-12));
    }
    let table = format_table(&reports);
    assert!(table.contains("constant-mean"));
    assert!(table.contains("reference"));
    let csv = to_csv(&reports);
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.starts_with("variant,pruning,t_h,mae,rmse"));
}

#[test]
fn parallel_and_serial_grids_agree() {
    let (market, split) = small();
    let grid = Grid::single(2, PruningMode::CateJf);
    let variants = [Variant::Gme(Ablation::GmeC), Variant::Mlp];
    let run = |jobs| {
        run_matrix(
            &market.catalog,
            &market.log,
            &split,
            &variants,
            &grid,
            &quick(),
            jobs,
        )
        .unwrap()
        .into_iter()
        .map(|r| r.untimed())
        .collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(2));
}

#[test]
fn perfect_external_predictions_score_zero() {
    let (market, split) = small();
    let data = split
        .prepare(&market.catalog, &market.log, 2, PruningMode::CateJf)
        .unwrap();
    let truth: HashMap<String, f64> = data
        .test
        .iter()
        .flat_map(|w: &WindowInputs| {
            w.target_ids
                .iter()
                .cloned()
                .zip(w.labels().unwrap().to_vec())
        })
        .collect();
    let r = score_predictions("external", &quick(), &data.test, &truth).unwrap();
    assert_eq!(r.weighted.mae, 0.0);
    let mut partial = truth.clone();
    partial.remove(&data.test[0].target_ids[0]);
    assert!(score_predictions("external", &quick(), &data.test, &partial).is_err());
}
