//! RGB image container and basic raster operations.
//!
//! Pixels are stored channel-first as an `Array3<f64>` of shape `(3, H, W)`.
//! Preprocessing code works in `[0, 1]`; model code works in `[-1, 1]`.
//! Conversions between the two ranges are explicit (`to_signed` / `to_unit`).

use ndarray::Array3;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub data: Array3<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize) -> Self {
        Image { data: Array3::zeros((3, height, width)) }
    }

    pub fn from_data(data: Array3<f64>) -> Self {
        assert_eq!(data.shape()[0], 3, "expected 3 channels");
        Image { data }
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[[c, y, x]]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[[c, y, x]] = v;
    }

    /// Map `[0,1]` pixels to the model range `[-1,1]`.
    pub fn to_signed(&self) -> Image {
        Image { data: self.data.mapv(|v| v * 2.0 - 1.0) }
    }

    /// Map `[-1,1]` pixels back to `[0,1]`.
    pub fn to_unit(&self) -> Image {
        Image { data: self.data.mapv(|v| (v + 1.0) / 2.0) }
    }

    pub fn clamp(&mut self, lo: f64, hi: f64) {
        self.data.mapv_inplace(|v| v.clamp(lo, hi));
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Load an 8-bit PNG as `[0,1]` pixels.
    pub fn load_png(path: &Path) -> Result<Image> {
        let im = image::open(path)
            .map_err(|e| Error::Image { path: path.to_owned(), source: e })?
            .into_rgb8();
        let (w, h) = (im.width() as usize, im.height() as usize);
        let mut data = Array3::zeros((3, h, w));
        for (x, y, p) in im.enumerate_pixels() {
            for c in 0..3 {
                data[[c, y as usize, x as usize]] = p.0[c] as f64 / 255.0;
            }
        }
        Ok(Image { data })
    }

    /// Save `[0,1]` pixels as an 8-bit PNG. Values outside the range are clamped.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let (h, w) = (self.height(), self.width());
        let mut buf = image::RgbImage::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let px = [0, 1, 2].map(|c| {
                    (self.data[[c, y, x]].clamp(0.0, 1.0) * 255.0).round() as u8
                });
                buf.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        buf.save(path)
            .map_err(|e| Error::Image { path: path.to_owned(), source: e })
    }

    /// Separable Gaussian blur with replicated borders. `sigma == 0` returns
    /// the input unchanged.
    pub fn gaussian_blur(&self, sigma: f64) -> Image {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let radius = (kernel.len() - 1) / 2;
        let (h, w) = (self.height(), self.width());
        let mut tmp = Array3::zeros((3, h, w));
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (i, k) in kernel.iter().enumerate() {
                        let sx = (x as isize + i as isize - radius as isize)
                            .clamp(0, w as isize - 1) as usize;
                        acc += k * self.data[[c, y, sx]];
                    }
                    tmp[[c, y, x]] = acc;
                }
            }
        }
        let mut out = Array3::zeros((3, h, w));
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (i, k) in kernel.iter().enumerate() {
                        let sy = (y as isize + i as isize - radius as isize)
                            .clamp(0, h as isize - 1) as usize;
                        acc += k * tmp[[c, sy, x]];
                    }
                    out[[c, y, x]] = acc;
                }
            }
        }
        Image { data: out }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_of_constant_is_constant() {
        let mut im = Image::zeros(16, 16);
        im.data.fill(0.37);
        let b = im.gaussian_blur(2.5);
        for v in b.data.iter() {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_sigma_zero_is_identity() {
        let mut im = Image::zeros(8, 8);
        im.data[[1, 3, 4]] = 0.9;
        assert_eq!(im.gaussian_blur(0.0), im);
    }

    #[test]
    fn png_round_trip_is_lossless_on_8bit_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut im = Image::zeros(5, 7);
        for (i, v) in im.data.iter_mut().enumerate() {
            *v = (i % 256) as f64 / 255.0;
        }
        im.save_png(&path).unwrap();
        let back = Image::load_png(&path).unwrap();
        for (a, b) in im.data.iter().zip(back.data.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
