//! Config loading and experiment execution for the `ergwalk` binary.

pub mod config;
pub mod runner;
