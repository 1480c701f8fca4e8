//! Experiment harness for the face-synthesis pipeline: configuration,
//! training/evaluation runners, CSV reports, and PNG plots.

pub mod config;
pub mod font;
pub mod plot;
pub mod report;
pub mod runner;
