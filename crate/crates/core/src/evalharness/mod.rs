//! Within-region and out-of-region evaluation: partitions, metrics,
//! multi-run experiments and report tables.

mod experiment;
mod manifest;
mod metrics;
mod partition;
mod report;

pub use experiment::{
    parse_variants, run_experiment, ExperimentConfig, ExperimentReport, RunRecord, Variant, VariantResult,
    WIDE_CHECKERBOARD_DELTA,
};
pub use manifest::{sha256_bytes, sha256_file, Manifest};
pub use metrics::{metrics, Metrics, MetricsSummary, Summary};
pub use partition::{
    checkerboard_cell, checkerboard_fold, checkerboard_side, mean_nearest_train_distance, partition_checkerboard,
    partition_random, partition_spatial, FoldAssignment, PartitionKind, PartitionSpec, Side,
};
pub use report::{export_report, format_mean_sd, load_report, report_csv, report_text, runs_csv};
