//! Per-image severity scoring for the histogram-divergence metric.
//!
//! The score is a scalar in `[0, 1]` rating facial deformity severity. The
//! real scoring method is external to this project, so the metric pipeline is
//! written against the `SeverityScorer` interface and ships with a documented
//! bilateral-asymmetry proxy: mirror the lower-face region about the vertical
//! midline, measure how much the two halves disagree, and rescale by
//! calibration percentiles from a reference set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::img::Image;

/// Deterministic, bounded per-image severity score. Implementations must be
/// total on valid aligned images (pixels in `[0, 1]`).
pub trait SeverityScorer {
    fn name(&self) -> &str;
    fn version(&self) -> &str;
    /// Score in `[0, 1]`.
    fn score(&self, image: &Image) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchMetric {
    L2,
    /// L2 on finite-difference gradients; invariant to global brightness shift.
    GradientL2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryProxyConfig {
    /// Region of interest as fractions of (y0, y1, x0, x1).
    pub roi: (f64, f64, f64, f64),
    /// Mirror axis as a fraction of image width.
    pub mirror_axis: f64,
    pub patch_metric: PatchMetric,
    /// Calibration range: raw distances are mapped affinely so this interval
    /// spans `[0, 1]`.
    pub normalization: (f64, f64),
}

impl Default for AsymmetryProxyConfig {
    fn default() -> Self {
        AsymmetryProxyConfig {
            // Lower 40% of the image, middle 60% of the width: the lip region
            // under the alignment contract.
            roi: (0.60, 1.0, 0.20, 0.80),
            mirror_axis: 0.5,
            patch_metric: PatchMetric::GradientL2,
            normalization: (0.0, 1.0),
        }
    }
}

impl AsymmetryProxyConfig {
    fn validate(&self) -> Result<()> {
        let (y0, y1, x0, x1) = self.roi;
        let ok = (0.0..=1.0).contains(&y0)
            && (0.0..=1.0).contains(&y1)
            && (0.0..=1.0).contains(&x0)
            && (0.0..=1.0).contains(&x1)
            && y0 < y1
            && x0 < x1
            && self.normalization.0 < self.normalization.1;
        if ok {
            Ok(())
        } else {
            Err(Error::BadConfig("asymmetry proxy roi/normalization".into()))
        }
    }
}

#[derive(Debug, Clone)]
pub struct AsymmetryProxy {
    pub config: AsymmetryProxyConfig,
}

impl AsymmetryProxy {
    pub fn new(config: AsymmetryProxyConfig) -> Result<Self> {
        config.validate()?;
        Ok(AsymmetryProxy { config })
    }

    /// Raw (uncalibrated) asymmetry distance: RMS of the chosen patch metric
    /// between the ROI and its mirror image about the vertical axis.
    pub fn raw_score(&self, image: &Image) -> f64 {
        let (h, w) = (image.height(), image.width());
        let (y0f, y1f, x0f, x1f) = self.config.roi;
        let y0 = (y0f * h as f64).floor() as usize;
        let y1 = ((y1f * h as f64).ceil() as usize).min(h);
        let x0 = (x0f * w as f64).floor() as usize;
        let x1 = ((x1f * w as f64).ceil() as usize).min(w);
        let axis = self.config.mirror_axis * (w as f64 - 1.0);
        let mirror_x = |x: usize| -> usize {
            let mx = (2.0 * axis - x as f64).round();
            mx.clamp(0.0, w as f64 - 1.0) as usize
        };
        let mut acc = 0.0;
        let mut count = 0.0;
        match self.config.patch_metric {
            PatchMetric::L2 => {
                for c in 0..3 {
                    for y in y0..y1 {
                        for x in x0..x1 {
                            let d = image.data[[c, y, x]] - image.data[[c, y, mirror_x(x)]];
                            acc += d * d;
                            count += 1.0;
                        }
                    }
                }
            }
            PatchMetric::GradientL2 => {
                // Compare gradient fields; the mirrored horizontal derivative
                // flips sign.
                for c in 0..3 {
                    for y in y0..y1.saturating_sub(1) {
                        for x in x0..x1.saturating_sub(1) {
                            let gx = image.data[[c, y, x + 1]] - image.data[[c, y, x]];
                            let gy = image.data[[c, y + 1, x]] - image.data[[c, y, x]];
                            let mx = mirror_x(x);
                            let mx1 = mirror_x(x + 1);
                            let mgx = image.data[[c, y, mx1]] - image.data[[c, y, mx]];
                            let mgy = image.data[[c, y + 1, mx]] - image.data[[c, y, mx]];
                            acc += (gx - mgx) * (gx - mgx) + (gy - mgy) * (gy - mgy);
                            count += 1.0;
                        }
                    }
                }
            }
        }
        if count == 0.0 {
            0.0
        } else {
            (acc / count).sqrt()
        }
    }
}

impl SeverityScorer for AsymmetryProxy {
    fn name(&self) -> &str {
        "asymmetry_proxy"
    }

    fn version(&self) -> &str {
        "1"
    }

    fn score(&self, image: &Image) -> Result<f64> {
        if !image.is_finite() {
            return Err(Error::NonFinite("severity input image"));
        }
        let raw = self.raw_score(image);
        let (lo, hi) = self.config.normalization;
        Ok(((raw - lo) / (hi - lo)).clamp(0.0, 1.0))
    }
}

/// Percentile with linear interpolation on the sorted sample.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = p * (n as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi.min(n - 1)] * frac
}

/// Fit the calibration range so the reference set's raw scores span `[0, 1]`:
/// `(lo, hi)` are set to the 1st and 99th percentiles.
pub fn calibrate(
    config: &AsymmetryProxyConfig,
    reference_set: &[Image],
) -> Result<AsymmetryProxyConfig> {
    if reference_set.len() < 50 {
        return Err(Error::TooFewSamples { need: 50, got: reference_set.len() });
    }
    let proxy = AsymmetryProxy::new(config.clone())?;
    let mut raw: Vec<f64> = reference_set.iter().map(|im| proxy.raw_score(im)).collect();
    raw.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = percentile(&raw, 0.01);
    let hi = percentile(&raw, 0.99);
    if hi - lo < 1e-12 {
        return Err(Error::DegenerateReferenceSet);
    }
    let mut out = config.clone();
    out.normalization = (lo, hi);
    Ok(out)
}

/// Look up a scorer implementation by registry name.
pub fn scorer_by_name(name: &str, config: &AsymmetryProxyConfig) -> Result<Box<dyn SeverityScorer>> {
    match name {
        "asymmetry_proxy" => Ok(Box::new(AsymmetryProxy::new(config.clone())?)),
        other => Err(Error::UnknownScorer(other.into())),
    }
}

/// Shared conformance checks every registered scorer must satisfy:
/// determinism and bounded output on the supplied images.
pub fn check_scorer_conformance(scorer: &dyn SeverityScorer, images: &[Image]) -> Result<()> {
    for image in images {
        let a = scorer.score(image)?;
        let b = scorer.score(image)?;
        if a != b {
            return Err(Error::BadConfig(format!("scorer {} not deterministic", scorer.name())));
        }
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::BadConfig(format!("scorer {} out of bounds: {}", scorer.name(), a)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric_image(n: usize) -> Image {
        let mut im = Image::zeros(n, n);
        for c in 0..3 {
            for y in 0..n {
                for x in 0..n {
                    let mx = (n - 1 - x).min(x);
                    im.data[[c, y, x]] = (mx as f64 * 0.07 + y as f64 * 0.013 + c as f64 * 0.1) % 1.0;
                }
            }
        }
        im
    }

    #[test]
    fn mirror_symmetric_image_scores_zero_raw() {
        let proxy = AsymmetryProxy::new(AsymmetryProxyConfig::default()).unwrap();
        let im = symmetric_image(32);
        assert_eq!(proxy.raw_score(&im), 0.0);
        let l2 = AsymmetryProxy::new(AsymmetryProxyConfig {
            patch_metric: PatchMetric::L2,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(l2.raw_score(&im), 0.0);
    }

    #[test]
    fn one_sided_defect_raises_score() {
        let mut base = symmetric_image(32);
        let mut notched = base.clone();
        for y in 22..28 {
            for x in 10..13 {
                for c in 0..3 {
                    notched.data[[c, y, x]] = 0.0;
                }
            }
        }
        let proxy = AsymmetryProxy::new(AsymmetryProxyConfig::default()).unwrap();
        assert!(proxy.raw_score(&notched) > proxy.raw_score(&base));
        // L2 metric too.
        let l2 = AsymmetryProxy::new(AsymmetryProxyConfig {
            patch_metric: PatchMetric::L2,
            ..Default::default()
        })
        .unwrap();
        assert!(l2.raw_score(&notched) > l2.raw_score(&mut base));
    }

    #[test]
    fn gradient_metric_ignores_brightness_shift() {
        let mut im = symmetric_image(32);
        // Break symmetry a bit so the raw score is nonzero.
        im.data[[0, 25, 9]] = 0.9;
        let proxy = AsymmetryProxy::new(AsymmetryProxyConfig::default()).unwrap();
        let a = proxy.raw_score(&im);
        let shifted = Image::from_data(im.data.mapv(|v| v + 0.1));
        let b = proxy.raw_score(&shifted);
        assert!((a - b).abs() < 1e-12);
        assert!(a > 0.0);
    }

    #[test]
    fn calibrate_uniform_scores() {
        // Synthetic raw-score control: images whose raw L2 asymmetry is an
        // affine function of a single pixel difference.
        let mut images = Vec::new();
        let n = 200;
        for i in 0..n {
            let mut im = Image::zeros(16, 16);
            // One asymmetric pixel in the ROI with controlled amplitude.
            let amp = i as f64 / (n - 1) as f64;
            im.data[[0, 12, 4]] = amp;
            images.push(im);
        }
        let cfg = AsymmetryProxyConfig {
            patch_metric: PatchMetric::L2,
            ..Default::default()
        };
        let cal = calibrate(&cfg, &images).unwrap();
        let (lo, hi) = cal.normalization;
        assert!(lo > 0.0 && hi > lo);
        // Idempotent: recalibrating with the calibrated config gives the same range.
        let cal2 = calibrate(&cal, &images).unwrap();
        assert_eq!(cal.normalization, cal2.normalization);
        // The calibrated scorer spans roughly [0, 1] on the reference set.
        let proxy = AsymmetryProxy::new(cal).unwrap();
        let scores: Vec<f64> = images.iter().map(|im| proxy.score(im).unwrap()).collect();
        assert!(scores.iter().cloned().fold(f64::MAX, f64::min) < 0.02);
        assert!(scores.iter().cloned().fold(f64::MIN, f64::max) > 0.98);
    }

    #[test]
    fn calibrate_rejects_degenerate_set() {
        let images = vec![symmetric_image(16); 60];
        let cfg = AsymmetryProxyConfig::default();
        assert!(matches!(calibrate(&cfg, &images), Err(Error::DegenerateReferenceSet)));
    }

    #[test]
    fn registry_and_conformance() {
        let scorer = scorer_by_name("asymmetry_proxy", &AsymmetryProxyConfig::default()).unwrap();
        let images: Vec<Image> = (0..5).map(|_| symmetric_image(16)).collect();
        check_scorer_conformance(scorer.as_ref(), &images).unwrap();
        assert!(scorer_by_name("nope", &AsymmetryProxyConfig::default()).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let sorted: Vec<f64> = (0..101).map(|i| 2.0 + 0.02 * i as f64).collect();
        assert!((percentile(&sorted, 0.01) - 2.02).abs() < 1e-9);
        assert!((percentile(&sorted, 0.99) - 3.98).abs() < 1e-9);
    }
}
