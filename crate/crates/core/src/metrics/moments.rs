use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Mean vector and unbiased covariance matrix of an embedded image set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMoments {
    pub mu: Array1<f64>,
    pub sigma: Array2<f64>,
    pub n: usize,
}

impl FeatureMoments {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Moments of an `n x d` feature matrix. Covariance is centered on the sample
/// mean and normalized by `n - 1`, symmetrized explicitly.
pub fn compute_moments(features: ArrayView2<f64>) -> Result<FeatureMoments> {
    let n = features.nrows();
    let d = features.ncols();
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    let mu = features.mean_axis(ndarray::Axis(0)).expect("n >= 2");
    let centered = &features - &mu.view().insert_axis(ndarray::Axis(0));
    let mut sigma: Array2<f64> = centered.t().dot(&centered) / (n as f64 - 1.0);
    // Enforce exact symmetry against accumulation-order asymmetry.
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (sigma[[i, j]] + sigma[[j, i]]);
            sigma[[i, j]] = v;
            sigma[[j, i]] = v;
        }
    }
    if mu.iter().any(|v| !v.is_finite()) || sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature moments"));
    }
    Ok(FeatureMoments { mu, sigma, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};
    use rand::{Rng, SeedableRng};

    #[test]
    fn two_points_1d() {
        let f = arr2(&[[0.0], [2.0]]);
        let m = compute_moments(f.view()).unwrap();
        assert_eq!(m.mu[0], 1.0);
        assert_eq!(m.sigma[[0, 0]], 2.0); // unbiased
    }

    #[test]
    fn identical_rows_zero_covariance() {
        let f = arr2(&[[1.0, -2.0], [1.0, -2.0], [1.0, -2.0]]);
        let m = compute_moments(f.view()).unwrap();
        assert!(m.sigma.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_row_rejected() {
        let f = arr2(&[[1.0, 2.0]]);
        assert!(compute_moments(f.view()).is_err());
    }

    /// Independent two-pass oracle: explicit mean pass then explicit
    /// elementwise covariance accumulation.
    fn two_pass(f: &Array2<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (n, d) = (f.nrows(), f.ncols());
        let mut mu = vec![0.0; d];
        for r in f.rows() {
            for j in 0..d {
                mu[j] += r[j];
            }
        }
        for v in &mut mu {
            *v /= n as f64;
        }
        let mut cov = vec![vec![0.0; d]; d];
        for r in f.rows() {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += (r[i] - mu[i]) * (r[j] - mu[j]);
                }
            }
        }
        for row in &mut cov {
            for v in row {
                *v /= n as f64 - 1.0;
            }
        }
        (mu, cov)
    }

    #[test]
    fn matches_two_pass_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let f = Array2::from_shape_fn((1000, 3), |_| rng.gen_range(-3.0..3.0));
        let m = compute_moments(f.view()).unwrap();
        let (mu, cov) = two_pass(&f);
        for j in 0..3 {
            assert!((m.mu[j] - mu[j]).abs() < 1e-10);
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.sigma[[i, j]] - cov[i][j]).abs() < 1e-10);
            }
        }
    }
}
