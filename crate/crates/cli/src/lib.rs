//! Batch front end for the `exceedmc` estimators: config ingestion, the
//! table and counterexample experiments, free-form estimates, invariant
//! checks and report emission.

pub mod app;
pub mod config;
pub mod experiments;
pub mod report;
