//! Metrics, baselines, the experiment grid and report writers.

mod baselines;
mod data;
mod harness;
mod metrics;

pub use baselines::{
    evaluate_regressor, fit_regressor, ConstantMean, LstmBaseline, MlpBaseline, Regressor,
};
pub use data::{MarketSplit, PreparedSplit};
pub use harness::{
    format_table, read_predictions, run_matrix, run_variant, score_predictions, to_csv,
    to_json_lines, Grid, MetricReport, Variant, WindowMetrics, REFERENCE_VALUES,
};
pub use metrics::{aggregate, metrics, Aggregate, Metrics};
