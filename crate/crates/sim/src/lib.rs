//! Trace-driven simulator around the batch dispatchers: configuration,
//! CSV inputs, synthetic networks and workloads, the batch clock and the
//! run reports.

pub mod config;
pub mod engine;
pub mod io;
pub mod report;
pub mod stats;
pub mod workload;
