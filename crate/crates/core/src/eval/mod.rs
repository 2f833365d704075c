//! Setups, folds, metrics, the experiment runner and reports.

pub mod folds;
pub mod harness;
pub mod metrics;
pub mod report;
pub mod setup;

pub use folds::{make_folds, Fold, FoldPlan};
pub use harness::{run_experiment, run_with_tables, CellReport, MetricsReport};
pub use metrics::{accuracy_f1, binary_metrics, roc_auc, BinaryMetrics};
pub use setup::{select_setup, SetupSpec};
