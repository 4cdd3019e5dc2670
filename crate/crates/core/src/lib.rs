pub mod adversaries;
pub mod dualgraph;
pub mod engine;
pub mod metrics;
pub mod protocols;
pub mod schedules;
