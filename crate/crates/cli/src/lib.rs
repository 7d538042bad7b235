//! Experiment driver: configuration, run orchestration and reporting.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
