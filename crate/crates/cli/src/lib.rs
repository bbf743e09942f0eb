//! Command-line front end for `pliflows-core`: JSON experiment configs in,
//! reproducible CSV and JSON artifacts out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod instances;
pub mod run;

pub use config::{Command, ExperimentConfig};
pub use run::{run, RunError, RunOutput};
