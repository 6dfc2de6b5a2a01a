//! Experiment configuration, execution and table output for the `xcov` binary.

pub mod config;
pub mod overlay;
pub mod run;
pub mod table;
