//! Batch driver for the VLC link simulator: TOML experiment configs in,
//! plot-ready CSVs and a run manifest out.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use experiments::{run, write_outputs, Experiment};
