//! Equal-memory comparison of the estimators and its CSV report.

mod budget;
mod config;
mod metrics;
mod run;
mod train;

pub use budget::{budget_to_buckets, check_budget, split_budget, top_k, weighted_sample, BYTES_PER_BUCKET};
pub use config::{Estimator, ExperimentConfig, SolverKind, Source};
pub use metrics::{avg_abs_error, expected_magnitude_error, mean_std};
pub use run::{run_experiment, synthetic_workload, to_csv, write_csv, FeatureSource, ReportRow, Workload};
pub use train::{train_opthash, TrainParams, TrainedOptHash};
