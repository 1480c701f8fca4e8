//! Desk-scale face image synthesis pipeline: dataset preprocessing, stochastic
//! augmentation with an adaptive controller, a style-based generator trained
//! adversarially, and a metric suite (FID, PPL, severity-histogram divergence)
//! for comparing real and generated image sets.

pub mod augment;
pub mod embedder;
pub mod error;
pub mod face_prep;
pub mod gan;
pub mod geometry;
pub mod img;
pub mod metrics;
pub mod nn;
pub mod severity;
pub mod synthetic;

pub use error::{Error, Result};
