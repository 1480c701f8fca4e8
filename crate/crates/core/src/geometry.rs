//! 2-D affine/similarity transforms and bilinear resampling.
//!
//! Transforms act on pixel-center coordinates `(x, y)` with integer centers.
//! Warping is done by inverse mapping: each output pixel samples the source at
//! the inverse-transformed location with bilinear interpolation.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::img::Image;

/// Row-major 2x3 affine transform: `p' = M * [x, y, 1]^T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub m: [[f64; 3]; 2],
}

impl Affine2 {
    pub fn identity() -> Self {
        Affine2 { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.m[0][0] * x + self.m[0][1] * y + self.m[0][2],
            self.m[1][0] * x + self.m[1][1] * y + self.m[1][2],
        )
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Affine2) -> Affine2 {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..2 {
                m[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            m[r][2] = a[r][0] * b[0][2] + a[r][1] * b[1][2] + a[r][2];
        }
        Affine2 { m }
    }

    pub fn inverse(&self) -> Affine2 {
        let [[a, b, tx], [c, d, ty]] = self.m;
        let det = a * d - b * c;
        assert!(det.abs() > 1e-300, "singular affine transform");
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Affine2 {
            m: [
                [ia, ib, -(ia * tx + ib * ty)],
                [ic, id, -(ic * tx + id * ty)],
            ],
        }
    }

    pub fn translation(dx: f64, dy: f64) -> Affine2 {
        Affine2 { m: [[1.0, 0.0, dx], [0.0, 1.0, dy]] }
    }

    pub fn scale(sx: f64, sy: f64) -> Affine2 {
        Affine2 { m: [[sx, 0.0, 0.0], [0.0, sy, 0.0]] }
    }

    pub fn rotation(theta: f64) -> Affine2 {
        let (s, c) = theta.sin_cos();
        Affine2 { m: [[c, -s, 0.0], [s, c, 0.0]] }
    }

    /// Rotation/scale about a fixed center point.
    pub fn about(center: (f64, f64), inner: &Affine2) -> Affine2 {
        Affine2::translation(center.0, center.1)
            .compose(inner)
            .compose(&Affine2::translation(-center.0, -center.1))
    }

    /// Uniform scale factor of a similarity transform.
    pub fn similarity_scale(&self) -> f64 {
        (self.m[0][0].powi(2) + self.m[1][0].powi(2)).sqrt()
    }

    /// Rotation angle of a similarity transform, in radians.
    pub fn similarity_rotation(&self) -> f64 {
        self.m[1][0].atan2(self.m[0][0])
    }

    /// Least-change similarity (rotation + uniform scale + translation) mapping
    /// two source points onto two destination points exactly.
    pub fn similarity_from_two_points(
        src: [(f64, f64); 2],
        dst: [(f64, f64); 2],
    ) -> Result<Affine2> {
        let vx = src[1].0 - src[0].0;
        let vy = src[1].1 - src[0].1;
        let n2 = vx * vx + vy * vy;
        if n2 < 1e-12 {
            return Err(Error::InvalidLandmarks("coincident reference points".into()));
        }
        let ux = dst[1].0 - dst[0].0;
        let uy = dst[1].1 - dst[0].1;
        // Complex ratio u / v gives scale*rotation.
        let a = (ux * vx + uy * vy) / n2;
        let b = (uy * vx - ux * vy) / n2;
        let tx = dst[0].0 - (a * src[0].0 - b * src[0].1);
        let ty = dst[0].1 - (b * src[0].0 + a * src[0].1);
        Ok(Affine2 { m: [[a, -b, tx], [b, a, ty]] })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// Clamp to the nearest edge pixel.
    Replicate,
    /// Mirror about the edge pixel (the edge itself is not repeated).
    Reflect,
}

fn border_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    i.clamp(0, n as isize - 1) as usize
}

fn reflect_index(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

fn resolve(i: isize, n: usize, border: Border) -> usize {
    match border {
        Border::Replicate => border_index(i, n),
        Border::Reflect => reflect_index(i, n),
    }
}

/// Bilinear taps (index pairs and weights) for one sample location.
fn taps(
    sx: f64,
    sy: f64,
    h: usize,
    w: usize,
    border: Border,
) -> [(usize, usize, f64); 4] {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let xa = resolve(x0, w, border);
    let xb = resolve(x0 + 1, w, border);
    let ya = resolve(y0, h, border);
    let yb = resolve(y0 + 1, h, border);
    [
        (ya, xa, (1.0 - fx) * (1.0 - fy)),
        (ya, xb, fx * (1.0 - fy)),
        (yb, xa, (1.0 - fx) * fy),
        (yb, xb, fx * fy),
    ]
}

/// Warp `src` through the transform whose inverse is `inv` (output -> source
/// mapping), producing an `out_h` x `out_w` image.
pub fn warp_bilinear(
    src: &Image,
    inv: &Affine2,
    out_h: usize,
    out_w: usize,
    border: Border,
) -> Image {
    let (h, w) = (src.height(), src.width());
    let mut out = Array3::zeros((3, out_h, out_w));
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            let t = taps(sx, sy, h, w, border);
            for c in 0..3 {
                let mut acc = 0.0;
                for &(ty, tx, wt) in &t {
                    acc += wt * src.data[[c, ty, tx]];
                }
                out[[c, y, x]] = acc;
            }
        }
    }
    Image::from_data(out)
}

/// Vector-Jacobian product of `warp_bilinear`: scatter output cotangents back
/// onto a source-sized buffer with the same taps and weights.
pub fn warp_bilinear_vjp(
    d_out: &Image,
    inv: &Affine2,
    in_h: usize,
    in_w: usize,
    border: Border,
) -> Image {
    let mut d_src = Array3::zeros((3, in_h, in_w));
    for y in 0..d_out.height() {
        for x in 0..d_out.width() {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            let t = taps(sx, sy, in_h, in_w, border);
            for c in 0..3 {
                let g = d_out.data[[c, y, x]];
                for &(ty, tx, wt) in &t {
                    d_src[[c, ty, tx]] += wt * g;
                }
            }
        }
    }
    Image::from_data(d_src)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_solves_scale_translation_case() {
        // Eyes at (40,50),(60,50) mapped to distance 40 centered at (64,64).
        let t = Affine2::similarity_from_two_points(
            [(40.0, 50.0), (60.0, 50.0)],
            [(44.0, 64.0), (84.0, 64.0)],
        )
        .unwrap();
        assert!((t.similarity_scale() - 2.0).abs() < 1e-12);
        assert!(t.similarity_rotation().abs() < 1e-12);
        let (mx, my) = t.apply(50.0, 50.0);
        assert!((mx - 64.0).abs() < 1e-9 && (my - 64.0).abs() < 1e-9);
    }

    #[test]
    fn inverse_round_trips() {
        let t = Affine2::rotation(0.3)
            .compose(&Affine2::scale(1.7, 0.6))
            .compose(&Affine2::translation(3.0, -2.0));
        let inv = t.inverse();
        let (x, y) = inv.apply(t.apply(5.0, 7.0).0, t.apply(5.0, 7.0).1);
        assert!((x - 5.0).abs() < 1e-9 && (y - 7.0).abs() < 1e-9);
    }

    #[test]
    fn identity_warp_preserves_pixels() {
        let mut im = Image::zeros(6, 9);
        for (i, v) in im.data.iter_mut().enumerate() {
            *v = i as f64 * 0.01;
        }
        let out = warp_bilinear(&im, &Affine2::identity(), 6, 9, Border::Replicate);
        for (a, b) in im.data.iter().zip(out.data.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn warp_vjp_matches_dot_product_identity() {
        // <warp(x), g> == <x, vjp(g)> for a linear operator.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut x = Image::zeros(8, 8);
        let mut g = Image::zeros(8, 8);
        for v in x.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in g.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let t = Affine2::about((3.5, 3.5), &Affine2::rotation(0.4).compose(&Affine2::scale(1.2, 0.8)));
        let inv = t.inverse();
        let y = warp_bilinear(&x, &inv, 8, 8, Border::Reflect);
        let d = warp_bilinear_vjp(&g, &inv, 8, 8, Border::Reflect);
        let lhs: f64 = y.data.iter().zip(g.data.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(d.data.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "lhs={lhs} rhs={rhs}");
    }
}
