use crate::error::{Error, Result};

/// Spherical linear interpolation between two latent vectors. Endpoints are
/// returned exactly at `t == 0` and `t == 1`; nearly parallel vectors fall
/// back to linear interpolation.
pub fn slerp(z1: &[f64], z2: &[f64], t: f64) -> Result<Vec<f64>> {
    if z1.len() != z2.len() {
        return Err(Error::DimensionMismatch { expected: z1.len(), got: z2.len() });
    }
    let n1 = norm(z1);
    let n2 = norm(z2);
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    if t == 0.0 {
        return Ok(z1.to_vec());
    }
    if t == 1.0 {
        return Ok(z2.to_vec());
    }
    let cos = dot(z1, z2) / (n1 * n2);
    let theta = cos.clamp(-1.0, 1.0).acos();
    let (w1, w2) = if theta < 1e-6 {
        (1.0 - t, t)
    } else {
        let s = theta.sin();
        (((1.0 - t) * theta).sin() / s, (t * theta).sin() / s)
    };
    Ok(z1.iter().zip(z2).map(|(a, b)| w1 * a + w2 * b).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_exact() {
        let z1 = vec![1.0, 2.0, 3.0];
        let z2 = vec![-0.5, 0.1, 4.0];
        assert_eq!(slerp(&z1, &z2, 0.0).unwrap(), z1);
        assert_eq!(slerp(&z1, &z2, 1.0).unwrap(), z2);
    }

    #[test]
    fn orthonormal_midpoint() {
        let z1 = vec![1.0, 0.0];
        let z2 = vec![0.0, 1.0];
        let m = slerp(&z1, &z2, 0.5).unwrap();
        let half = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m[0] - half).abs() < 1e-12);
        assert!((m[1] - half).abs() < 1e-12);
        assert!((norm(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_norm_endpoints_keep_norm() {
        let z1 = vec![3.0, 0.0, 4.0];
        let z2 = vec![0.0, -5.0, 0.0];
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let v = slerp(&z1, &z2, t).unwrap();
            assert!((norm(&v) - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(slerp(&[0.0, 0.0], &[1.0, 0.0], 0.5).is_err());
    }
}
