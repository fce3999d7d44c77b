//! Empirical pipeline over per-subject decision data: ingestion, threshold
//! estimation, participation summaries, the subject-level bootstrap and
//! distribution comparisons.

mod bootstrap;
mod dataset;
mod differential;
mod ks;
mod summary;
mod thresholds;

pub use bootstrap::{
    bootstrap_exp1, BootstrapDistribution, BootstrapResult, BootstrapSummary, MODE_BIN_WIDTH, REDRAW_CAP,
};
pub use dataset::{ingest, ingest_path, write_csv, IngestReport, RowIssue};
pub use differential::{conditional_differential, DifferentialStat};
pub use ks::{ks_statistic, ks_two_sample, KsTest};
pub use summary::{frequency_summary, ClusterLevel, FrequencyRow};
pub use thresholds::{
    count_monotonicity_violations, estimate_thresholds, scan_thresholds, ThresholdEstimate, ThresholdReport,
};
