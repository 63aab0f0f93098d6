//! Scenario characterization and mining for autonomous-driving trajectory
//! datasets.

pub mod anomaly;
pub mod config;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod lanes;
pub mod pipeline;
pub mod scenario;
pub mod scoring;
pub mod report;
pub mod split;
pub mod synth;
