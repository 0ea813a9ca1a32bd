//! Experiment runner for `poisson-vga`: reads a run config, assembles the
//! problem, runs one of the studies and writes CSV, JSON and VGAM artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod seed;

pub use commands::{cmd_bench, cmd_hyper, cmd_solve, cmd_validate, Outcome, Overrides, Study};
pub use config::RunConfig;
pub use error::CliError;
