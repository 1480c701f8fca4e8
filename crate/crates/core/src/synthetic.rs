//! Procedural face-like image generator: the desk-scale stand-in for real
//! source and target photo collections. Faces are drawn from signed-distance
//! primitives (head oval, eyes, brows, nose, mouth) with an optional one-sided
//! lip-notch deformation of parameterized width and depth. Landmark positions
//! are known by construction, so the preprocessing pipeline can be tested
//! against exact geometry.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::face_prep::LandmarkSet;
use crate::geometry::Affine2;
use crate::img::Image;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticFaceSpec {
    pub resolution: usize,
    /// Fraction of the population carrying a lip notch.
    pub cleft_fraction: f64,
    /// In-plane pose rotation range, degrees (uniform in +-range).
    pub rotation_range_deg: f64,
    /// Pose scale range (log-uniform between the bounds).
    pub scale_range: (f64, f64),
    /// Max pose translation as a fraction of the image side.
    pub translate_frac: f64,
    /// Notch width as a fraction of mouth width.
    pub notch_width_range: (f64, f64),
    /// Notch depth (vertical extent) as a fraction of the mouth-nose gap.
    pub notch_depth_range: (f64, f64),
}

impl Default for SyntheticFaceSpec {
    fn default() -> Self {
        SyntheticFaceSpec {
            resolution: 32,
            cleft_fraction: 0.5,
            rotation_range_deg: 6.0,
            scale_range: (0.9, 1.1),
            translate_frac: 0.03,
            notch_width_range: (0.2, 0.6),
            notch_depth_range: (0.5, 1.0),
        }
    }
}

/// Sampled per-face draw parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaceParams {
    pub rotation_rad: f64,
    pub scale: f64,
    pub translate: (f64, f64),
    pub skin: [f64; 3],
    pub background: ([f64; 3], [f64; 3]),
    pub lip: [f64; 3],
    pub eye_spacing: f64,
    pub mouth_half_width: f64,
    /// `(side, width_frac, depth_frac)`; side is -1 (left) or 1 (right).
    pub notch: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaceMeta {
    pub index: usize,
    pub has_notch: bool,
    pub notch_width: f64,
    pub params: FaceParams,
}

impl FaceParams {
    pub fn sample(spec: &SyntheticFaceSpec, rng: &mut ChaCha8Rng, notched: bool) -> FaceParams {
        let rot = spec.rotation_range_deg.to_radians();
        let (s_lo, s_hi) = spec.scale_range;
        let scale = (s_lo.ln() + rng.gen::<f64>() * (s_hi.ln() - s_lo.ln())).exp();
        let jitter = |rng: &mut ChaCha8Rng, base: f64, amp: f64| base + rng.gen_range(-amp..amp);
        FaceParams {
            rotation_rad: rng.gen_range(-rot..=rot),
            scale,
            translate: (
                rng.gen_range(-spec.translate_frac..=spec.translate_frac),
                rng.gen_range(-spec.translate_frac..=spec.translate_frac),
            ),
            skin: [
                jitter(rng, 0.84, 0.10),
                jitter(rng, 0.70, 0.10),
                jitter(rng, 0.58, 0.10),
            ],
            background: (
                [jitter(rng, 0.45, 0.35), jitter(rng, 0.55, 0.35), jitter(rng, 0.65, 0.3)],
                [jitter(rng, 0.25, 0.2), jitter(rng, 0.35, 0.2), jitter(rng, 0.45, 0.2)],
            ),
            lip: [jitter(rng, 0.55, 0.1), jitter(rng, 0.25, 0.08), jitter(rng, 0.28, 0.08)],
            eye_spacing: jitter(rng, 0.17, 0.015),
            mouth_half_width: jitter(rng, 0.13, 0.02),
            notch: if notched {
                let (w_lo, w_hi) = spec.notch_width_range;
                let (d_lo, d_hi) = spec.notch_depth_range;
                Some((
                    if rng.gen_bool(0.5) { -1.0 } else { 1.0 },
                    rng.gen_range(w_lo..=w_hi),
                    rng.gen_range(d_lo..=d_hi),
                ))
            } else {
                None
            },
        }
    }
}

// Canonical face geometry (unit square coordinates).
const HEAD_CENTER: (f64, f64) = (0.5, 0.52);
const HEAD_RADII: (f64, f64) = (0.34, 0.44);
const EYE_Y: f64 = 0.42;
const MOUTH_CENTER: (f64, f64) = (0.5, 0.70);
const MOUTH_HALF_HEIGHT: f64 = 0.040;
const NOSE_CENTER: (f64, f64) = (0.5, 0.565);

fn ellipse_sdf(u: f64, v: f64, c: (f64, f64), r: (f64, f64)) -> f64 {
    // Approximate signed distance, in units of the smaller radius.
    let du = (u - c.0) / r.0;
    let dv = (v - c.1) / r.1;
    ((du * du + dv * dv).sqrt() - 1.0) * r.0.min(r.1)
}

fn box_sdf(u: f64, v: f64, c: (f64, f64), half: (f64, f64)) -> f64 {
    let dx = (u - c.0).abs() - half.0;
    let dy = (v - c.1).abs() - half.1;
    let ox = dx.max(0.0);
    let oy = dy.max(0.0);
    (ox * ox + oy * oy).sqrt() + dx.max(dy).min(0.0)
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] * (1.0 - t) + b[i] * t)
}

/// Pose transform: canonical pixel coordinates to output pixel coordinates.
pub fn pose_transform(spec: &SyntheticFaceSpec, params: &FaceParams) -> Affine2 {
    let r = spec.resolution as f64;
    let center = ((r - 1.0) / 2.0, (r - 1.0) / 2.0);
    let inner = Affine2::rotation(params.rotation_rad)
        .compose(&Affine2::scale(params.scale, params.scale));
    Affine2::translation(params.translate.0 * r, params.translate.1 * r)
        .compose(&Affine2::about(center, &inner))
}

/// Render one face and its exact landmarks. Pixels are `[0, 1]` RGB.
pub fn render_face(spec: &SyntheticFaceSpec, params: &FaceParams) -> (Image, LandmarkSet) {
    let r = spec.resolution;
    let rf = r as f64;
    let pose = pose_transform(spec, params);
    let inv = pose.inverse();
    // Soft edge width in canonical units: about 0.8 output pixels.
    let aa = 0.8 / (rf * params.scale);
    let cover = |sdf: f64| -> f64 { (0.5 - sdf / (2.0 * aa)).clamp(0.0, 1.0) };

    let eye_l = (0.5 - params.eye_spacing, EYE_Y);
    let eye_r = (0.5 + params.eye_spacing, EYE_Y);
    let mouth_r = (params.mouth_half_width, MOUTH_HALF_HEIGHT);
    let nose_shade = params.skin.map(|v| v * 0.90);
    let brow = [0.32, 0.24, 0.16];
    let eye_color = [0.13, 0.11, 0.10];

    let mut im = Image::zeros(r, r);
    for y in 0..r {
        for x in 0..r {
            // Canonical unit coordinates of this output pixel.
            let (px, py) = inv.apply(x as f64, y as f64);
            let (u, v) = ((px + 0.5) / rf, (py + 0.5) / rf);

            let (bg_top, bg_bot) = params.background;
            let t = (y as f64 / (rf - 1.0)).clamp(0.0, 1.0);
            let mut color = mix(bg_top, bg_bot, t);

            color = mix(color, params.skin, cover(ellipse_sdf(u, v, HEAD_CENTER, HEAD_RADII)));
            color = mix(color, nose_shade, cover(ellipse_sdf(u, v, NOSE_CENTER, (0.028, 0.048))));
            for e in [eye_l, eye_r] {
                let brow_c = (e.0, e.1 - 0.075);
                color = mix(color, brow, cover(ellipse_sdf(u, v, brow_c, (0.075, 0.014))));
                color = mix(color, eye_color, cover(ellipse_sdf(u, v, e, (0.055, 0.032))));
            }
            color = mix(color, params.lip, cover(ellipse_sdf(u, v, MOUTH_CENTER, mouth_r)));
            if let Some((side, width, depth)) = params.notch {
                let w = width * params.mouth_half_width;
                let gap = MOUTH_CENTER.1 - NOSE_CENTER.1;
                let d = depth * gap.abs();
                let cx = 0.5 + side * (params.mouth_half_width * 0.45);
                let cy = MOUTH_CENTER.1 - d / 2.0;
                color = mix(color, params.lip, cover(box_sdf(u, v, (cx, cy), (w / 2.0, d / 2.0))));
            }
            for (c, val) in color.iter().enumerate() {
                im.data[[c, y, x]] = val.clamp(0.0, 1.0);
            }
        }
    }

    let map = |p: (f64, f64)| pose.apply(p.0 * rf - 0.5, p.1 * rf - 0.5);
    let head_corners = [
        map((HEAD_CENTER.0 - HEAD_RADII.0, HEAD_CENTER.1 - HEAD_RADII.1)),
        map((HEAD_CENTER.0 + HEAD_RADII.0, HEAD_CENTER.1 - HEAD_RADII.1)),
        map((HEAD_CENTER.0 - HEAD_RADII.0, HEAD_CENTER.1 + HEAD_RADII.1)),
        map((HEAD_CENTER.0 + HEAD_RADII.0, HEAD_CENTER.1 + HEAD_RADII.1)),
    ];
    let min_x = head_corners.iter().map(|c| c.0).fold(f64::MAX, f64::min);
    let max_x = head_corners.iter().map(|c| c.0).fold(f64::MIN, f64::max);
    let min_y = head_corners.iter().map(|c| c.1).fold(f64::MAX, f64::min);
    let max_y = head_corners.iter().map(|c| c.1).fold(f64::MIN, f64::max);
    let landmarks = LandmarkSet {
        left_eye: map(eye_l),
        right_eye: map(eye_r),
        mouth_center: map(MOUTH_CENTER),
        face_bbox: (min_x, min_y, max_x - min_x, max_y - min_y),
    };
    (im, landmarks)
}

/// Deterministic notch assignment: exactly `round(n * cleft_fraction)` faces
/// are notched, spread by a seeded shuffle.
pub fn notch_assignment(n: usize, cleft_fraction: f64, seed: u64) -> Vec<bool> {
    let k = (n as f64 * cleft_fraction).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f7463);
    idx.shuffle(&mut rng);
    let mut out = vec![false; n];
    for &i in idx.iter().take(k) {
        out[i] = true;
    }
    out
}

/// Generate `n` faces in memory.
pub fn generate_faces(
    spec: &SyntheticFaceSpec,
    n: usize,
    seed: u64,
) -> Vec<(Image, LandmarkSet, FaceMeta)> {
    let notched = notch_assignment(n, spec.cleft_fraction, seed);
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64).wrapping_mul(0x9e3779b97f4a7c15) ^ seed);
            let params = FaceParams::sample(spec, &mut rng, notched[i]);
            let (im, lm) = render_face(spec, &params);
            let meta = FaceMeta {
                index: i,
                has_notch: notched[i],
                notch_width: params.notch.map(|(_, w, _)| w).unwrap_or(0.0),
                params,
            };
            (im, lm, meta)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: SyntheticFaceSpec,
    pub seed: u64,
    pub n: usize,
    pub entries: Vec<FaceMeta>,
}

/// Write a synthetic dataset to disk: PNGs, landmark sidecars, a tab-separated
/// prep manifest (`manifest.txt`) and a JSON metadata file (`meta.json`).
pub fn make_synthetic_dataset(
    spec: &SyntheticFaceSpec,
    n: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    assert!(n >= 1);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let faces = generate_faces(spec, n, seed);
    let mut manifest_lines = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    for (im, lm, meta) in faces {
        let img_path = out_dir.join(format!("face_{:05}.png", meta.index));
        let lmk_path = out_dir.join(format!("face_{:05}.json", meta.index));
        im.save_png(&img_path)?;
        lm.save_json(&lmk_path)?;
        manifest_lines.push(format!("{}\t{}", img_path.display(), lmk_path.display()));
        entries.push(meta);
    }
    let manifest_path = out_dir.join("manifest.txt");
    std::fs::write(&manifest_path, manifest_lines.join("\n") + "\n")
        .map_err(|e| Error::io(&manifest_path, e))?;
    let manifest = DatasetManifest { spec: spec.clone(), seed, n, entries };
    let meta_path = out_dir.join("meta.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Json { path: meta_path.clone(), source: e })?;
    std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok(manifest)
}

/// Load every `face_*.png` of a dataset directory as `[0, 1]` images, in
/// index order.
pub fn load_dataset_images(dir: &Path) -> Result<Vec<Image>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension().map(|x| x == "png").unwrap_or(false)
                && p.file_name()
                    .map(|n| n.to_string_lossy().starts_with("face_"))
                    .unwrap_or(false)
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| Image::load_png(p)).collect()
}
