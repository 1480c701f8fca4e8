//! Evaluation metrics for comparing real and generated image sets: Frechet
//! distance between embedded feature distributions, perceptual path length of
//! a generator's latent space, and Jensen-Shannon divergence between severity
//! histograms.

mod dish;
mod fid;
mod hist;
mod moments;
mod ppl;
mod slerp;

pub use dish::{dish, DishResult, DEFAULT_DISH_BINS, DISH_SMOOTHING};
pub use fid::{fid, sqrtm_product};
pub use hist::{js_divergence, SeverityHistogram};
pub use moments::{compute_moments, FeatureMoments};
pub use ppl::{ppl, PathGenerator, PplConfig, PplEstimate, PplInterpolation};
pub use slerp::slerp;

use crate::img::Image;
use ndarray::Array1;

/// Maps an image to a fixed-dimensional feature vector.
pub trait Embedder {
    fn dim(&self) -> usize;
    fn embed(&self, image: &Image) -> Array1<f64>;
}

/// Perceptual distance between two images. Must be symmetric with
/// `dist(a, a) == 0`.
pub trait PerceptualDistance {
    fn dist(&self, a: &Image, b: &Image) -> f64;
}

/// Flattens raw pixels into the feature vector. Used by analytic tests and as
/// the trivial embedding baseline.
pub struct IdentityEmbedder {
    dim: usize,
}

impl IdentityEmbedder {
    pub fn new(dim: usize) -> Self {
        IdentityEmbedder { dim }
    }
}

impl Embedder for IdentityEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, image: &Image) -> Array1<f64> {
        let flat: Vec<f64> = image.data.iter().copied().take(self.dim).collect();
        assert_eq!(flat.len(), self.dim, "image smaller than embedder dim");
        Array1::from(flat)
    }
}
