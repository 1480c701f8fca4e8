use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PplInterpolation {
    /// Spherical interpolation in the input latent space.
    SlerpZ,
    /// Linear interpolation in the intermediate latent space.
    LerpW,
}

#[derive(Debug, Clone, Copy)]
pub struct PplConfig {
    /// Step size along the interpolation parameter.
    pub epsilon: f64,
    pub n_paths: usize,
    pub interpolation: PplInterpolation,
}

impl Default for PplConfig {
    fn default() -> Self {
        PplConfig { epsilon: 1e-4, n_paths: 1000, interpolation: PplInterpolation::SlerpZ }
    }
}

/// A generator viewed as a map from interpolation paths to outputs. `at` must
/// be deterministic given its arguments; stochastic inputs (noise) must be
/// keyed off `path_idx` so both ends of one path share them.
pub trait PathGenerator {
    type Output;
    fn sample_endpoints(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>);
    fn at(
        &self,
        z1: &[f64],
        z2: &[f64],
        t: f64,
        interp: PplInterpolation,
        path_idx: u64,
    ) -> Result<Self::Output>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PplEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

/// Monte-Carlo perceptual path length: the expectation over random paths of
/// `d(G(path(t)), G(path(t + eps))) / eps^2` with `t ~ U[0, 1)`.
pub fn ppl<G, D>(gen: &G, dist: D, cfg: &PplConfig, seed: u64) -> Result<PplEstimate>
where
    G: PathGenerator,
    D: Fn(&G::Output, &G::Output) -> f64,
{
    assert!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for path_idx in 0..cfg.n_paths as u64 {
        let (z1, z2) = gen.sample_endpoints(&mut rng);
        let t: f64 = rng.gen_range(0.0..1.0);
        let a = gen.at(&z1, &z2, t, cfg.interpolation, path_idx)?;
        let b = gen.at(&z1, &z2, t + cfg.epsilon, cfg.interpolation, path_idx)?;
        let v = dist(&a, &b) / (cfg.epsilon * cfg.epsilon);
        sum += v;
        sum_sq += v * v;
    }
    let n = cfg.n_paths as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let stderr = if cfg.n_paths > 1 { (var / (n - 1.0)).sqrt() } else { f64::INFINITY };
    Ok(PplEstimate { mean, stderr, n_paths: cfg.n_paths })
}
