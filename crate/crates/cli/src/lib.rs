//! Experiment layer: configuration, seeded batches, sweeps, fits and
//! schedule search on top of the `localcast` simulator.

pub mod config;
pub mod experiment;
pub mod fit;
pub mod report;
pub mod search;
pub mod sweep;
