//! Benchmark orchestration for the model-reduction toolkit.
//!
//! The library side of the `rombench` binary: parameter-grid generation
//! ([`grid`]), the relative trajectory-error metric and its statistics
//! ([`metrics`]), experiment configuration ([`config`]), CSV report
//! emission ([`report`]), and the resumable experiment phases ([`phases`]).

pub mod config;
pub mod grid;
pub mod metrics;
pub mod phases;
pub mod report;
