//! Experiment runner: config parsing, strategy-by-seed batteries, curve and
//! summary files, and geography export of queried samples.

mod config;
mod experiment;
mod geo;

pub use config::{
    parse_config, parse_config_str, DataKeys, DataKind, DataSource, ExperimentConfig, LoopMode, KEYS,
};
pub use experiment::{
    acquired_csv, load_dataset, read_curve, run_experiment, run_single, run_stem, summary_csv,
    Dataset, ExperimentReport, RunRecord, REFERENCE_ACTIVE_FINAL, REFERENCE_BASELINE,
    REFERENCE_RANDOM_FINAL, SUMMARY_HEADER,
};
pub use geo::{export_query_geography, GEO_HEADER};
