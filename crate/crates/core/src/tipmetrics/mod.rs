//! Tip localization and evaluation metrics.

pub mod metrics;
pub mod report;
pub mod tip;

pub use metrics::{dsc, mean_sd, tip_rmse};
pub use tip::{locate_tip, mfp_stats, TipEstimate};
pub use report::{evaluate_corpus, evaluate_results, paired_report, write_report, EvalInput, EvalOptions, EvalReport, ImageRow, MeanSd};
