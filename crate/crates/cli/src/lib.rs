//! Config-driven experiment runner and HTTP annotation service built on
//! `needle_core`.

pub mod commands;
pub mod config;
pub mod output;
pub mod service;

pub use config::{ExperimentConfig, Overrides};
