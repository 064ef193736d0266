//! Reproducible experiment driver: configuration, seeding, sweeps over
//! trials and SNR, CSV persistence and summaries.

pub mod config;
pub mod export;
pub mod records;
pub mod seeds;
pub mod summary;
pub mod sweep;

pub use config::ExperimentConfig;
pub use export::{channels_path, generate_to_files, train_to_file};
pub use records::{read_csv, write_csv, ResultRecord, COLUMNS, SCHEMA_VERSION};
pub use summary::{summarize, Summary};
pub use sweep::{run_sweep, run_sweep_to_files, run_trial, se_curve, summary_path};
