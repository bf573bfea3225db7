//! File formats, configuration and the command-line driver for
//! [`ldhit_core`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod parallel;

pub use commands::{run, Command, Context};
pub use config::RunConfig;
pub use error::CliError;
