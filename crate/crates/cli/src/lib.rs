//! Batch front end for the adaptive observer: scenario runs, excitation
//! checks, CSV logs and SVG plots.

pub mod commands;
pub mod csvlog;
pub mod plot;

pub use commands::{check_pe, error_code, exit, plot, run, CliError, Overrides};
