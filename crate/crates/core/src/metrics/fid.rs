use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::metrics::FeatureMoments;

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Principal square root of a symmetric PSD matrix via eigendecomposition.
/// Slightly negative eigenvalues from rounding are clipped to zero.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let sqrt_vals: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let q = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sqrt_vals));
    q * d * q.transpose()
}

/// Square root term of the Frechet distance, computed through the symmetric
/// reformulation `(S1^{1/2} S2 S1^{1/2})^{1/2}`. The returned matrix is
/// similar to `(S1 S2)^{1/2}`, so its trace is the quantity the distance
/// consumes.
pub fn sqrtm_product(sigma1: &Array2<f64>, sigma2: &Array2<f64>) -> Result<Array2<f64>> {
    if sigma1.iter().chain(sigma2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sqrtm_product input"));
    }
    let s1 = to_dmatrix(sigma1);
    let s2 = to_dmatrix(sigma2);
    let s1h = sqrt_psd(&s1);
    let inner = &s1h * s2 * &s1h;
    // Symmetrize before the second eigendecomposition.
    let inner = (&inner + inner.transpose()) * 0.5;
    Ok(from_dmatrix(&sqrt_psd(&inner)))
}

/// Frechet distance between two Gaussian fits:
/// `||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2})`, clamped at zero.
pub fn fid(a: &FeatureMoments, b: &FeatureMoments) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    // Equal moments give exactly zero, skipping eigendecomposition round-off.
    if a.mu == b.mu && a.sigma == b.sigma {
        return Ok(0.0);
    }
    let mean_term: f64 = a
        .mu
        .iter()
        .zip(b.mu.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let cross = sqrtm_product(&a.sigma, &b.sigma)?;
    let tr = |m: &Array2<f64>| (0..m.nrows()).map(|i| m[[i, i]]).sum::<f64>();
    let value = mean_term + tr(&a.sigma) + tr(&b.sigma) - 2.0 * tr(&cross);
    if !value.is_finite() {
        return Err(Error::NonFinite("fid"));
    }
    Ok(value.max(0.0))
}
