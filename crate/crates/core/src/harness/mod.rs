//! Experiment front-end: config files, run directories, ablation presets,
//! metric streams and the phenomena report, plus the `flowrl` command line.

pub mod cli;
pub mod config;
pub mod metrics;
pub mod phenomena;
pub mod presets;
pub mod rundir;

pub use config::{emit_config, parse_config, parse_config_str};
pub use metrics::{curves_csv, read_metrics, MetricRecord, SCHEMA_VERSION};
pub use phenomena::{reproduce_phenomena, PhenomenaConfig, PhenomenaReport, RunSeries};
pub use presets::ExperimentPreset;
pub use rundir::{git_blob_hash, pretrain_for, train_in_dir, RunDir};
