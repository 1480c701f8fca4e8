//! Face dataset preprocessing: similarity alignment from eye landmarks,
//! soft elliptical face masking with a blurred background, and batch dataset
//! preparation from a manifest.
//!
//! All images here are `[0, 1]` RGB. Landmarks come from JSON sidecar files,
//! one per image, in pixel units of the source image.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{warp_bilinear, Affine2, Border};
use crate::img::Image;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LandmarkSet {
    pub left_eye: (f64, f64),
    pub right_eye: (f64, f64),
    pub mouth_center: (f64, f64),
    /// `(x, y, w, h)` in pixels.
    pub face_bbox: (f64, f64, f64, f64),
}

impl LandmarkSet {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let inside = |p: (f64, f64)| {
            p.0 >= 0.0 && p.1 >= 0.0 && p.0 < width as f64 && p.1 < height as f64
        };
        if !inside(self.left_eye) || !inside(self.right_eye) || !inside(self.mouth_center) {
            return Err(Error::InvalidLandmarks("landmark outside image bounds".into()));
        }
        if self.left_eye.0 >= self.right_eye.0 {
            return Err(Error::InvalidLandmarks("left eye not left of right eye".into()));
        }
        let dx = self.right_eye.0 - self.left_eye.0;
        let dy = self.right_eye.1 - self.left_eye.1;
        if (dx * dx + dy * dy).sqrt() < 1e-6 {
            return Err(Error::InvalidLandmarks("coincident eyes".into()));
        }
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<LandmarkSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_owned(), source: e })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Json { path: path.to_owned(), source: e })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Landmarks mapped through an affine transform.
    pub fn transformed(&self, t: &Affine2) -> LandmarkSet {
        let map = |p: (f64, f64)| t.apply(p.0, p.1);
        // The bbox is mapped via its corner points' axis-aligned hull.
        let (x, y, w, h) = self.face_bbox;
        let corners = [
            t.apply(x, y),
            t.apply(x + w, y),
            t.apply(x, y + h),
            t.apply(x + w, y + h),
        ];
        let min_x = corners.iter().map(|c| c.0).fold(f64::MAX, f64::min);
        let max_x = corners.iter().map(|c| c.0).fold(f64::MIN, f64::max);
        let min_y = corners.iter().map(|c| c.1).fold(f64::MAX, f64::min);
        let max_y = corners.iter().map(|c| c.1).fold(f64::MIN, f64::max);
        LandmarkSet {
            left_eye: map(self.left_eye),
            right_eye: map(self.right_eye),
            mouth_center: map(self.mouth_center),
            face_bbox: (min_x, min_y, max_x - min_x, max_y - min_y),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepConfig {
    /// Output side length in pixels (square output).
    pub output_resolution: usize,
    /// Target interocular distance as a fraction of the output side.
    pub interocular_target_frac: f64,
    /// Fraction of the output area covered by the preserved face ellipse.
    pub face_area_frac: f64,
    /// Gaussian blur applied to the background region, in output pixels.
    pub background_blur_sigma: f64,
    /// Vertical placement of the eye line as a fraction of the output side.
    pub eye_row_frac: f64,
    /// Width of the soft mask transition band, as a fraction of the side.
    pub mask_band_frac: f64,
    /// Height/width ratio of the face ellipse.
    pub mask_aspect: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            output_resolution: 256,
            interocular_target_frac: 100.0 / 1024.0,
            face_area_frac: 0.60,
            background_blur_sigma: 8.0,
            eye_row_frac: 0.42,
            mask_band_frac: 0.03,
            mask_aspect: 1.25,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.face_area_frac && self.face_area_frac < 1.0) {
            return Err(Error::BadConfig("face_area_frac must be in (0, 1)".into()));
        }
        if self.interocular_target_frac * (self.output_resolution as f64) < 4.0 {
            return Err(Error::BadConfig("interocular target below 4 px".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AlignedImage {
    /// Square `[0, 1]` image at the configured output resolution.
    pub image: Image,
    /// Source-to-output similarity transform that was applied.
    pub transform: Affine2,
    pub source_id: String,
}

/// Similarity transform placing the eyes on a horizontal line at the target
/// interocular distance, with their midpoint at
/// `(R/2, eye_row_frac * R)`.
pub fn compute_alignment(landmarks: &LandmarkSet, config: &PrepConfig) -> Result<Affine2> {
    config.validate()?;
    let r = config.output_resolution as f64;
    let dist = config.interocular_target_frac * r;
    let mid = (r / 2.0, config.eye_row_frac * r);
    let dst_left = (mid.0 - dist / 2.0, mid.1);
    let dst_right = (mid.0 + dist / 2.0, mid.1);
    Affine2::similarity_from_two_points(
        [landmarks.left_eye, landmarks.right_eye],
        [dst_left, dst_right],
    )
}

/// Fraction of the transformed face bbox that falls outside the output frame.
fn out_of_frame_fraction(landmarks: &LandmarkSet, t: &Affine2, r: f64) -> f64 {
    let mapped = landmarks.transformed(t);
    let (x, y, w, h) = mapped.face_bbox;
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let ix = (x + w).min(r) - x.max(0.0);
    let iy = (y + h).min(r) - y.max(0.0);
    let inter = ix.max(0.0) * iy.max(0.0);
    1.0 - inter / (w * h)
}

/// Align a raw image: bilinear warp through the similarity transform, with
/// out-of-source regions filled by edge replication.
pub fn align_face(
    image: &Image,
    source_id: &str,
    landmarks: &LandmarkSet,
    config: &PrepConfig,
) -> Result<AlignedImage> {
    landmarks.validate(image.width(), image.height())?;
    let transform = compute_alignment(landmarks, config)?;
    let r = config.output_resolution;
    let outside = out_of_frame_fraction(landmarks, &transform, r as f64);
    if outside > 0.20 {
        return Err(Error::AlignmentOutOfFrame { frac: outside * 100.0 });
    }
    let warped = warp_bilinear(image, &transform.inverse(), r, r, Border::Replicate);
    Ok(AlignedImage { image: warped, transform, source_id: to_string(source_id) })
}

fn to_string(s: &str) -> String {
    s.to_owned()
}

/// Soft elliptical face mask. Values are 1 inside the face ellipse, 0 in the
/// background, with a smoothstep transition band. Pixels with weight >= 0.5
/// cover `face_area_frac` of the frame within tolerance.
pub fn face_mask(center_y: f64, config: &PrepConfig) -> ndarray::Array2<f64> {
    let r = config.output_resolution;
    let rf = r as f64;
    let cx = rf / 2.0;
    let cy = center_y;
    let aspect = config.mask_aspect;
    let target = config.face_area_frac * rf * rf;

    // In-frame pixel count inside the hard ellipse with semi-axes (s, s*aspect).
    let count_inside = |s: f64| -> f64 {
        let (a, b) = (s, s * aspect);
        let mut count = 0.0;
        for y in 0..r {
            let dy = (y as f64 - cy) / b;
            let rem = 1.0 - dy * dy;
            if rem <= 0.0 {
                continue;
            }
            let half = a * rem.sqrt();
            let x0 = (cx - half).ceil().max(0.0) as usize;
            let x1 = (cx + half).floor().min(rf - 1.0) as isize;
            if x1 >= x0 as isize {
                count += (x1 - x0 as isize + 1) as f64;
            }
        }
        count
    };

    let (mut lo, mut hi) = (1.0, 2.0 * rf);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if count_inside(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    let (a, b) = (s, s * aspect);
    let band = (config.mask_band_frac * rf).max(1e-6) / (a * b).sqrt() * 1.0;

    ndarray::Array2::from_shape_fn((r, r), |(y, x)| {
        let dx = (x as f64 - cx) / a;
        let dy = (y as f64 - cy) / b;
        let d = (dx * dx + dy * dy).sqrt();
        // Smoothstep from 1 at d = 1 - band/2 down to 0 at d = 1 + band/2.
        let t = ((d - (1.0 - band / 2.0)) / band).clamp(0.0, 1.0);
        1.0 - t * t * (3.0 - 2.0 * t)
    })
}

/// Replace the background (complement of the face ellipse) with a Gaussian
/// blur of the image, blended through the soft mask. `sigma == 0` is the
/// identity.
pub fn blur_background(
    aligned: &AlignedImage,
    landmarks: &LandmarkSet,
    config: &PrepConfig,
) -> AlignedImage {
    if config.background_blur_sigma <= 0.0 {
        return aligned.clone();
    }
    let mapped = landmarks.transformed(&aligned.transform);
    let eye_y = 0.5 * (mapped.left_eye.1 + mapped.right_eye.1);
    let center_y = 0.5 * (eye_y + mapped.mouth_center.1);
    let mask = face_mask(center_y, config);
    let blurred = aligned.image.gaussian_blur(config.background_blur_sigma);
    let mut out = aligned.image.clone();
    let r = config.output_resolution;
    for c in 0..3 {
        for y in 0..r {
            for x in 0..r {
                let m = mask[[y, x]];
                out.data[[c, y, x]] =
                    m * aligned.image.data[[c, y, x]] + (1.0 - m) * blurred.data[[c, y, x]];
            }
        }
    }
    AlignedImage { image: out, transform: aligned.transform, source_id: aligned.source_id.clone() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepEntry {
    pub source_id: String,
    pub status: String,
    /// Row-major similarity coefficients `[m00, m01, m02, m10, m11, m12]`,
    /// empty on failure.
    pub transform: Vec<f64>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepReport {
    pub processed: usize,
    pub skipped: usize,
    pub entries: Vec<PrepEntry>,
}

/// Batch-prepare a dataset. The manifest lists one record per line:
/// `<image_path>\t<landmark_path>`. Every successful image is written as an
/// 8-bit PNG at the output resolution; failures are recorded per item and do
/// not abort the run. Output order follows the manifest.
pub fn prep_dataset(manifest_path: &Path, out_dir: &Path, config: &PrepConfig) -> Result<PrepReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let mut entries = Vec::new();
    let mut processed = 0usize;
    let mut skipped = 0usize;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, '\t');
        let image_path = PathBuf::from(parts.next().unwrap_or_default());
        let landmark_path = parts.next().map(PathBuf::from);
        let source_id = image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| line.to_owned());
        let result = (|| -> Result<PrepEntry> {
            let landmark_path = landmark_path
                .ok_or_else(|| Error::InvalidLandmarks("missing landmark path".into()))?;
            let image = Image::load_png(&image_path)?;
            if image.height() < 32 || image.width() < 32 {
                return Err(Error::ShapeMismatch("raw image below 32 px".into()));
            }
            let landmarks = LandmarkSet::load_json(&landmark_path)?;
            let aligned = align_face(&image, &source_id, &landmarks, config)?;
            let finished = blur_background(&aligned, &landmarks, config);
            let out_path = out_dir.join(format!("{source_id}.png"));
            finished.image.save_png(&out_path)?;
            let m = finished.transform.m;
            Ok(PrepEntry {
                source_id: source_id.clone(),
                status: "ok".into(),
                transform: vec![m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2]],
                output: Some(out_path),
            })
        })();
        match result {
            Ok(entry) => {
                processed += 1;
                entries.push(entry);
            }
            Err(e) => {
                skipped += 1;
                entries.push(PrepEntry {
                    source_id,
                    status: format!("skipped: {e}"),
                    transform: vec![],
                    output: None,
                });
            }
        }
    }
    let report = PrepReport { processed, skipped, entries };
    write_report(&report, &out_dir.join("manifest.json"))?;
    Ok(report)
}

fn write_report(report: &PrepReport, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Json { path: path.to_owned(), source: e })?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn landmarks() -> LandmarkSet {
        LandmarkSet {
            left_eye: (40.0, 50.0),
            right_eye: (60.0, 50.0),
            mouth_center: (50.0, 70.0),
            face_bbox: (25.0, 30.0, 50.0, 55.0),
        }
    }

    fn cfg(r: usize) -> PrepConfig {
        PrepConfig { output_resolution: r, ..Default::default() }
    }

    #[test]
    fn alignment_hand_case() {
        // Eyes (40,50),(60,50); target distance 40 at R=128 with midpoint (64,64).
        let config = PrepConfig {
            output_resolution: 128,
            interocular_target_frac: 40.0 / 128.0,
            eye_row_frac: 0.5,
            ..Default::default()
        };
        let t = compute_alignment(&landmarks(), &config).unwrap();
        assert!((t.similarity_scale() - 2.0).abs() < 1e-12);
        assert!(t.similarity_rotation().abs() < 1e-12);
        let (x, y) = t.apply(50.0, 50.0);
        assert!((x - 64.0).abs() < 1e-9 && (y - 64.0).abs() < 1e-9);
    }

    #[test]
    fn already_aligned_gives_identity() {
        let config = cfg(128);
        let r = 128.0;
        let d = config.interocular_target_frac * r;
        let lm = LandmarkSet {
            left_eye: (r / 2.0 - d / 2.0, config.eye_row_frac * r),
            right_eye: (r / 2.0 + d / 2.0, config.eye_row_frac * r),
            mouth_center: (r / 2.0, 0.65 * r),
            face_bbox: (30.0, 30.0, 68.0, 80.0),
        };
        let t = compute_alignment(&lm, &config).unwrap();
        let id = Affine2::identity();
        for r in 0..2 {
            for c in 0..3 {
                assert!((t.m[r][c] - id.m[r][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rotated_landmarks_recover_rotation() {
        // Rotate an aligned landmark set by 10 degrees; the computed transform
        // must rotate by -10 degrees.
        let config = cfg(128);
        let theta = 10.0f64.to_radians();
        let rot = Affine2::about((64.0, 64.0), &Affine2::rotation(theta));
        let lm = landmarks().transformed(&rot);
        let t = compute_alignment(&lm, &config).unwrap();
        assert!((t.similarity_rotation() + theta).abs() < 0.1f64.to_radians());
    }

    #[test]
    fn coincident_eyes_rejected() {
        let mut lm = landmarks();
        lm.right_eye = lm.left_eye;
        assert!(compute_alignment(&lm, &cfg(64)).is_err());
        assert!(lm.validate(100, 100).is_err());
    }

    #[test]
    fn bright_pixel_lands_at_predicted_position() {
        let mut im = Image::zeros(100, 100);
        let lm = landmarks();
        im.data[[0, 50, 40]] = 1.0;
        im.data[[0, 50, 60]] = 1.0;
        let config = cfg(128);
        let aligned = align_face(&im, "t", &lm, &config).unwrap();
        let (ex, ey) = aligned.transform.apply(40.0, 50.0);
        // Find the red-channel argmax near the predicted left-eye position.
        let mut best = (0usize, 0usize, -1.0);
        for y in 0..128 {
            for x in 0..64 {
                let v = aligned.image.data[[0, y, x]];
                if v > best.2 {
                    best = (x, y, v);
                }
            }
        }
        assert!((best.0 as f64 - ex).abs() <= 1.0 && (best.1 as f64 - ey).abs() <= 1.0);
    }

    #[test]
    fn alignment_out_of_frame_detected() {
        // Tiny interocular target with a huge face bbox: the scaled bbox
        // cannot fit in the frame.
        let mut lm = landmarks();
        lm.face_bbox = (0.0, 0.0, 3000.0, 3000.0);
        let config = PrepConfig {
            output_resolution: 64,
            interocular_target_frac: 0.5,
            ..Default::default()
        };
        let im = Image::zeros(3200, 3200);
        let mut lm2 = lm.clone();
        lm2.left_eye = (1500.0, 1500.0);
        lm2.right_eye = (1520.0, 1500.0);
        lm2.mouth_center = (1510.0, 1520.0);
        let err = align_face(&im, "t", &lm2, &config).unwrap_err();
        assert!(matches!(err, Error::AlignmentOutOfFrame { .. }));
    }

    #[test]
    fn mask_area_hits_target() {
        for r in [128usize, 256] {
            let config = cfg(r);
            let mask = face_mask(0.55 * r as f64, &config);
            let count = mask.iter().filter(|&&m| m >= 0.5).count() as f64;
            let frac = count / (r * r) as f64;
            assert!(
                (frac - config.face_area_frac).abs() <= 0.02,
                "r={r} frac={frac}"
            );
        }
    }

    #[test]
    fn blur_background_zero_sigma_is_identity() {
        let config = PrepConfig { background_blur_sigma: 0.0, ..cfg(64) };
        let im = Image::zeros(100, 100);
        let aligned = align_face(&im, "t", &landmarks(), &config).unwrap();
        let out = blur_background(&aligned, &landmarks(), &config);
        assert_eq!(out.image, aligned.image);
    }

    #[test]
    fn blur_background_constant_image_unchanged() {
        let config = cfg(64);
        let mut im = Image::zeros(100, 100);
        im.data.fill(0.4);
        let aligned = align_face(&im, "t", &landmarks(), &config).unwrap();
        let out = blur_background(&aligned, &landmarks(), &config);
        for (a, b) in out.image.data.iter().zip(aligned.image.data.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn realignment_is_near_identity() {
        let config = cfg(128);
        let im = Image::zeros(100, 100);
        let lm = landmarks();
        let aligned = align_face(&im, "t", &lm, &config).unwrap();
        let new_lm = lm.transformed(&aligned.transform);
        let t2 = compute_alignment(&new_lm, &config).unwrap();
        assert!((t2.similarity_scale() - 1.0).abs() < 0.01);
        assert!(t2.similarity_rotation().abs() < 0.5f64.to_radians());
        let (x, y) = t2.apply(64.0, 64.0);
        assert!((x - 64.0).hypot(y - 64.0) < 1.0);
    }

    #[test]
    fn prep_dataset_handles_empty_and_corrupt_entries() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");

        // Empty manifest.
        let empty = dir.path().join("empty.txt");
        std::fs::write(&empty, "").unwrap();
        let report = prep_dataset(&empty, &out, &cfg(64)).unwrap();
        assert_eq!(report.processed, 0);
        assert_eq!(report.skipped, 0);

        // 3 valid + 1 corrupt.
        let mut lines = Vec::new();
        for i in 0..3 {
            let img_path = dir.path().join(format!("im{i}.png"));
            let lmk_path = dir.path().join(format!("im{i}.json"));
            let mut im = Image::zeros(100, 100);
            im.data.fill(0.5);
            im.save_png(&img_path).unwrap();
            landmarks().save_json(&lmk_path).unwrap();
            lines.push(format!("{}\t{}", img_path.display(), lmk_path.display()));
        }
        let corrupt = dir.path().join("bad.png");
        std::fs::write(&corrupt, b"not a png").unwrap();
        let lmk_path = dir.path().join("bad.json");
        landmarks().save_json(&lmk_path).unwrap();
        lines.push(format!("{}\t{}", corrupt.display(), lmk_path.display()));

        let manifest = dir.path().join("manifest.txt");
        std::fs::write(&manifest, lines.join("\n")).unwrap();
        let report = prep_dataset(&manifest, &out, &cfg(64)).unwrap();
        assert_eq!(report.processed, 3);
        assert_eq!(report.skipped, 1);
        assert!(out.join("manifest.json").exists());
        assert!(out.join("im0.png").exists());
    }
}
