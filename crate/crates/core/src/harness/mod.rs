//! Data ingestion, synthetic data, cross-validation, metrics and reports.

pub mod cv;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod synth;
pub mod variance;

pub use cv::{kfold_split, Fold};
pub use experiment::{
    run_experiment, run_experiment_on, AllocationRule, ExperimentConfig, FoldReport, MeanStd,
    MetricsReport, SamplerKind, Targets,
};
pub use io::{
    load_matrix, load_targets, parse_dense_csv, parse_matrix_market, parse_targets,
    save_matrix_market, write_matrix_market, write_targets, MatrixFormat,
};
pub use metrics::{mean_std, metrics, Metrics};
pub use synth::{choose_probes, random_sparse, synthesize_targets, ClusteredSparse};
pub use variance::{level_variance_report, LevelVarianceConfig, LevelVarianceReport, LevelVarianceRow};
