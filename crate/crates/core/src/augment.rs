//! Stochastic, seed-deterministic image augmentation in the model's `[-1, 1]`
//! range, grouped into pixel blitting, geometric warps and color transforms,
//! plus the adaptive controller that tunes the application probability from a
//! discriminator-overfitting signal.
//!
//! Every sampled transform is linear (or affine) in the pixels, so the whole
//! plan has an exact vector-Jacobian product; the training loop needs this to
//! push generator gradients through augmented fakes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::cell::Cell;

use crate::geometry::{warp_bilinear, warp_bilinear_vjp, Affine2, Border};
use crate::img::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regimen {
    None,
    /// Color transforms only.
    C,
    /// Blitting + geometric transforms.
    Bg,
    /// All groups.
    Bgc,
}

impl std::str::FromStr for Regimen {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Regimen::None),
            "c" => Ok(Regimen::C),
            "bg" => Ok(Regimen::Bg),
            "bgc" => Ok(Regimen::Bgc),
            other => Err(crate::Error::BadConfig(format!("unknown regimen {other:?}"))),
        }
    }
}

impl std::fmt::Display for Regimen {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regimen::None => "none",
            Regimen::C => "c",
            Regimen::Bg => "bg",
            Regimen::Bgc => "bgc",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlitParams {
    pub x_flip: bool,
    pub rot90: bool,
    /// Max integer translation, as a fraction of the image side.
    pub integer_translate_frac: f64,
}

impl Default for BlitParams {
    fn default() -> Self {
        BlitParams { x_flip: true, rot90: true, integer_translate_frac: 0.125 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometricParams {
    /// Std of log2 isotropic scale.
    pub isotropic_scale_logrange: f64,
    /// Std of log2 anisotropic stretch ratio.
    pub anisotropic_scale_logrange: f64,
    /// Std of fractional translation, as a fraction of the image side.
    pub fractional_translate_frac: f64,
}

impl Default for GeometricParams {
    fn default() -> Self {
        GeometricParams {
            isotropic_scale_logrange: 0.2,
            anisotropic_scale_logrange: 0.2,
            fractional_translate_frac: 0.125,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColorParams {
    /// Std of additive brightness shift.
    pub brightness_range: f64,
    /// Std of log2 contrast scale.
    pub contrast_logrange: f64,
    /// Max absolute hue rotation, radians.
    pub hue_rotation_range: f64,
    /// Std of log2 saturation scale.
    pub saturation_logrange: f64,
    pub luma_flip: bool,
}

impl Default for ColorParams {
    fn default() -> Self {
        ColorParams {
            brightness_range: 0.2,
            contrast_logrange: 0.5,
            hue_rotation_range: std::f64::consts::PI,
            saturation_logrange: 1.0,
            luma_flip: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub regimen: Regimen,
    pub blit: BlitParams,
    pub geometric: GeometricParams,
    pub color: ColorParams,
}

impl AugmentationConfig {
    pub fn with_regimen(regimen: Regimen) -> Self {
        AugmentationConfig {
            regimen,
            blit: BlitParams::default(),
            geometric: GeometricParams::default(),
            color: ColorParams::default(),
        }
    }

    pub fn blit_enabled(&self) -> bool {
        matches!(self.regimen, Regimen::Bg | Regimen::Bgc)
    }

    pub fn geometric_enabled(&self) -> bool {
        matches!(self.regimen, Regimen::Bg | Regimen::Bgc)
    }

    pub fn color_enabled(&self) -> bool {
        matches!(self.regimen, Regimen::C | Regimen::Bgc)
    }
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig::with_regimen(Regimen::Bgc)
    }
}

/// Unit luma axis used by luma flip, hue rotation and saturation.
const LUMA: [f64; 3] = [
    0.577_350_269_189_625_8,
    0.577_350_269_189_625_8,
    0.577_350_269_189_625_8,
];

/// One concrete sampled transform.
#[derive(Debug, Clone, PartialEq)]
pub enum AugOp {
    XFlip,
    /// Counter-clockwise quarter turns (square images only).
    Rot90(u8),
    IntTranslate(i64, i64),
    /// Combined geometric warp, stored as the forward transform.
    Warp(Affine2),
    /// Combined color transform `rgb -> M rgb + t`.
    ColorAffine([[f64; 3]; 3], [f64; 3]),
}

impl AugOp {
    fn apply(&self, src: &Image) -> Image {
        let (h, w) = (src.height(), src.width());
        match self {
            AugOp::XFlip => {
                let mut out = src.clone();
                for c in 0..3 {
                    for y in 0..h {
                        for x in 0..w {
                            out.data[[c, y, x]] = src.data[[c, y, w - 1 - x]];
                        }
                    }
                }
                out
            }
            AugOp::Rot90(k) => rot90(src, *k),
            AugOp::IntTranslate(dx, dy) => {
                let mut out = Image::zeros(h, w);
                for c in 0..3 {
                    for y in 0..h {
                        for x in 0..w {
                            let sy = reflect(y as i64 - dy, h);
                            let sx = reflect(x as i64 - dx, w);
                            out.data[[c, y, x]] = src.data[[c, sy, sx]];
                        }
                    }
                }
                out
            }
            AugOp::Warp(t) => warp_bilinear(src, &t.inverse(), h, w, Border::Reflect),
            AugOp::ColorAffine(m, t) => {
                let mut out = Image::zeros(h, w);
                for y in 0..h {
                    for x in 0..w {
                        let rgb = [0, 1, 2].map(|c| src.data[[c, y, x]]);
                        for c in 0..3 {
                            out.data[[c, y, x]] = m[c][0] * rgb[0]
                                + m[c][1] * rgb[1]
                                + m[c][2] * rgb[2]
                                + t[c];
                        }
                    }
                }
                out
            }
        }
    }

    fn vjp(&self, d_out: &Image) -> Image {
        let (h, w) = (d_out.height(), d_out.width());
        match self {
            // Self-inverse permutation.
            AugOp::XFlip => AugOp::XFlip.apply(d_out),
            AugOp::Rot90(k) => rot90(d_out, (4 - k % 4) % 4),
            AugOp::IntTranslate(dx, dy) => {
                let mut d_src = Image::zeros(h, w);
                for c in 0..3 {
                    for y in 0..h {
                        for x in 0..w {
                            let sy = reflect(y as i64 - dy, h);
                            let sx = reflect(x as i64 - dx, w);
                            d_src.data[[c, sy, sx]] += d_out.data[[c, y, x]];
                        }
                    }
                }
                d_src
            }
            AugOp::Warp(t) => warp_bilinear_vjp(d_out, &t.inverse(), h, w, Border::Reflect),
            AugOp::ColorAffine(m, _t) => {
                let mut d_src = Image::zeros(h, w);
                for y in 0..h {
                    for x in 0..w {
                        let g = [0, 1, 2].map(|c| d_out.data[[c, y, x]]);
                        for k in 0..3 {
                            d_src.data[[k, y, x]] =
                                m[0][k] * g[0] + m[1][k] * g[1] + m[2][k] * g[2];
                        }
                    }
                }
                d_src
            }
        }
    }
}

fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

fn rot90(src: &Image, k: u8) -> Image {
    let (h, w) = (src.height(), src.width());
    assert_eq!(h, w, "rot90 requires square images");
    let mut out = Image::zeros(h, w);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = match k % 4 {
                    0 => (y, x),
                    1 => (x, w - 1 - y),          // 90 degrees CCW
                    2 => (h - 1 - y, w - 1 - x),  // 180
                    _ => (h - 1 - x, y),          // 270
                };
                out.data[[c, y, x]] = src.data[[c, sy, sx]];
            }
        }
    }
    out
}

/// A concrete per-image augmentation plan: the sampled ops in application
/// order, followed by a clamp to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugPlan {
    pub ops: Vec<AugOp>,
}

/// Plan plus the state needed for an exact backward pass.
pub struct AppliedAug {
    plan: AugPlan,
    /// Pre-clamp output, for the clamp mask.
    pre_clamp: Image,
}

impl AugPlan {
    pub fn from_ops(ops: Vec<AugOp>) -> Self {
        AugPlan { ops }
    }

    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn apply(&self, image: &Image) -> Image {
        self.apply_with_tape(image).0
    }

    pub fn apply_with_tape(&self, image: &Image) -> (Image, AppliedAug) {
        if self.ops.is_empty() {
            return (
                image.clone(),
                AppliedAug { plan: self.clone(), pre_clamp: image.clone() },
            );
        }
        let mut cur = image.clone();
        for op in &self.ops {
            cur = op.apply(&cur);
        }
        let pre_clamp = cur.clone();
        cur.clamp(-1.0, 1.0);
        (cur, AppliedAug { plan: self.clone(), pre_clamp })
    }
}

impl AppliedAug {
    /// Backpropagate a cotangent through the applied plan.
    pub fn vjp(&self, d_out: &Image) -> Image {
        if self.plan.ops.is_empty() {
            return d_out.clone();
        }
        let mut g = d_out.clone();
        // Clamp: zero gradient where the output saturated.
        for (gv, &pv) in g.data.iter_mut().zip(self.pre_clamp.data.iter()) {
            if !(-1.0..=1.0).contains(&pv) {
                *gv = 0.0;
            }
        }
        for op in self.plan.ops.iter().rev() {
            g = op.vjp(&g);
        }
        g
    }
}

/// Sample a plan: each enabled transform is independently applied with
/// probability `p`, with parameters drawn from the configured ranges. The
/// same `(config, p, seed, size)` always yields the same plan.
pub fn sample_plan(config: &AugmentationConfig, p: f64, seed: u64, size: usize) -> AugPlan {
    assert!((0.0..=1.0).contains(&p), "p must be a probability");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ops = Vec::new();
    if p == 0.0 {
        return AugPlan { ops };
    }
    let center = (size as f64 - 1.0) / 2.0;
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    if config.blit_enabled() {
        if config.blit.x_flip && rng.gen_bool(p) {
            ops.push(AugOp::XFlip);
        }
        if config.blit.rot90 && rng.gen_bool(p) {
            ops.push(AugOp::Rot90(rng.gen_range(0u8..4)));
        }
        if config.blit.integer_translate_frac > 0.0 && rng.gen_bool(p) {
            let max = (config.blit.integer_translate_frac * size as f64).round() as i64;
            ops.push(AugOp::IntTranslate(
                rng.gen_range(-max..=max),
                rng.gen_range(-max..=max),
            ));
        }
    }
    if config.geometric_enabled() {
        let mut geo = Affine2::identity();
        let mut any = false;
        if config.geometric.isotropic_scale_logrange > 0.0 && rng.gen_bool(p) {
            let s = 2f64.powf(normal(&mut rng) * config.geometric.isotropic_scale_logrange);
            geo = Affine2::scale(s, s).compose(&geo);
            any = true;
        }
        if config.geometric.anisotropic_scale_logrange > 0.0 && rng.gen_bool(p) {
            let r = 2f64.powf(normal(&mut rng) * config.geometric.anisotropic_scale_logrange);
            geo = Affine2::scale(r, 1.0 / r).compose(&geo);
            any = true;
        }
        let mut warp = Affine2::about((center, center), &geo);
        if config.geometric.fractional_translate_frac > 0.0 && rng.gen_bool(p) {
            let s = config.geometric.fractional_translate_frac * size as f64;
            let (dx, dy) = (normal(&mut rng) * s, normal(&mut rng) * s);
            warp = Affine2::translation(dx, dy).compose(&warp);
            any = true;
        }
        if any {
            ops.push(AugOp::Warp(warp));
        }
    }
    if config.color_enabled() {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let mut t = [0.0; 3];
        let mut any = false;
        if config.color.brightness_range > 0.0 && rng.gen_bool(p) {
            let b = normal(&mut rng) * config.color.brightness_range;
            for tc in &mut t {
                *tc += b;
            }
            any = true;
        }
        if config.color.contrast_logrange > 0.0 && rng.gen_bool(p) {
            let c = 2f64.powf(normal(&mut rng) * config.color.contrast_logrange);
            scale_affine(&mut m, &mut t, c);
            any = true;
        }
        if config.color.luma_flip && rng.gen_bool(p) {
            let h = householder(&LUMA);
            left_mul(&mut m, &mut t, &h);
            any = true;
        }
        if config.color.hue_rotation_range > 0.0 && rng.gen_bool(p) {
            let theta = rng.gen_range(-config.color.hue_rotation_range..=config.color.hue_rotation_range);
            let r = axis_rotation(&LUMA, theta);
            left_mul(&mut m, &mut t, &r);
            any = true;
        }
        if config.color.saturation_logrange > 0.0 && rng.gen_bool(p) {
            let s = 2f64.powf(normal(&mut rng) * config.color.saturation_logrange);
            let sat = saturation_matrix(&LUMA, s);
            left_mul(&mut m, &mut t, &sat);
            any = true;
        }
        if any {
            ops.push(AugOp::ColorAffine(m, t));
        }
    }
    AugPlan { ops }
}

fn scale_affine(m: &mut [[f64; 3]; 3], t: &mut [f64; 3], c: f64) {
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            *v *= c;
        }
    }
    for v in t.iter_mut() {
        *v *= c;
    }
}

fn left_mul(m: &mut [[f64; 3]; 3], t: &mut [f64; 3], a: &[[f64; 3]; 3]) {
    let mut nm = [[0.0; 3]; 3];
    let mut nt = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            for (k, ak) in a[i].iter().enumerate() {
                nm[i][j] += ak * m[k][j];
            }
        }
        for (k, ak) in a[i].iter().enumerate() {
            nt[i] += ak * t[k];
        }
    }
    *m = nm;
    *t = nt;
}

/// Reflection about the plane orthogonal to `axis`: flips the luma component.
fn householder(axis: &[f64; 3]) -> [[f64; 3]; 3] {
    let mut h = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            h[i][j] = if i == j { 1.0 } else { 0.0 };
            h[i][j] -= 2.0 * axis[i] * axis[j];
        }
    }
    h
}

/// Rodrigues rotation about `axis` by `theta`.
fn axis_rotation(axis: &[f64; 3], theta: f64) -> [[f64; 3]; 3] {
    let (s, c) = theta.sin_cos();
    let [x, y, z] = *axis;
    [
        [
            c + x * x * (1.0 - c),
            x * y * (1.0 - c) - z * s,
            x * z * (1.0 - c) + y * s,
        ],
        [
            y * x * (1.0 - c) + z * s,
            c + y * y * (1.0 - c),
            y * z * (1.0 - c) - x * s,
        ],
        [
            z * x * (1.0 - c) - y * s,
            z * y * (1.0 - c) + x * s,
            c + z * z * (1.0 - c),
        ],
    ]
}

/// Blend between the luma projection (`s = 0`) and identity (`s = 1`),
/// extrapolating beyond 1 for oversaturation.
fn saturation_matrix(axis: &[f64; 3], s: f64) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let proj = axis[i] * axis[j];
            let id = if i == j { 1.0 } else { 0.0 };
            m[i][j] = proj + s * (id - proj);
        }
    }
    m
}

/// One-shot augmentation of a `[-1, 1]` image.
pub fn augment(image: &Image, config: &AugmentationConfig, p: f64, seed: u64) -> Image {
    let plan = sample_plan(config, p, seed, image.width());
    plan.apply(image)
}

/// Adaptive augmentation controller state. `rt_estimate` tracks the EMA of
/// the mean sign of discriminator outputs on real images; when it exceeds the
/// target the discriminator is deemed to be overfitting and `p` is raised.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdaState {
    pub p: f64,
    pub target_rt: f64,
    /// How far `p` moves per image shown.
    pub adjustment_per_image: f64,
    /// EMA horizon, in images.
    pub ema_horizon_images: f64,
    pub rt_estimate: f64,
}

impl Default for AdaState {
    fn default() -> Self {
        AdaState {
            p: 0.0,
            target_rt: 0.6,
            // p can traverse [0, 1] in 20k images.
            adjustment_per_image: 1.0 / 20_000.0,
            ema_horizon_images: 500.0,
            rt_estimate: 0.0,
        }
    }
}

/// Update the controller from one batch of discriminator logits on reals.
pub fn ada_update(state: &mut AdaState, d_real_logits: &[f64]) {
    assert!(!d_real_logits.is_empty(), "ada_update needs a nonempty batch");
    let batch = d_real_logits.len() as f64;
    let mean_sign: f64 = d_real_logits.iter().map(|&l| l.signum()).sum::<f64>() / batch;
    let alpha = (batch / state.ema_horizon_images).min(1.0);
    state.rt_estimate += alpha * (mean_sign - state.rt_estimate);
    state.rt_estimate = state.rt_estimate.clamp(-1.0, 1.0);
    let step = state.adjustment_per_image * batch;
    if state.rt_estimate > state.target_rt {
        state.p += step;
    } else {
        state.p -= step;
    }
    state.p = state.p.clamp(0.0, 1.0);
}

/// The single augmentation operator shared by the real and fake branches of
/// discriminator training. Counters record how many images each branch
/// augmented so tests can assert the branches stay symmetric.
pub struct AugmentOperator {
    pub config: AugmentationConfig,
    reals_augmented: Cell<u64>,
    fakes_augmented: Cell<u64>,
}

impl AugmentOperator {
    pub fn new(config: AugmentationConfig) -> Self {
        AugmentOperator {
            config,
            reals_augmented: Cell::new(0),
            fakes_augmented: Cell::new(0),
        }
    }

    pub fn plan(&self, p: f64, seed: u64, size: usize) -> AugPlan {
        sample_plan(&self.config, p, seed, size)
    }

    pub fn augment_real(&self, image: &Image, p: f64, seed: u64) -> Image {
        self.reals_augmented.set(self.reals_augmented.get() + 1);
        self.plan(p, seed, image.width()).apply(image)
    }

    pub fn augment_fake(&self, image: &Image, p: f64, seed: u64) -> (Image, AppliedAug) {
        self.fakes_augmented.set(self.fakes_augmented.get() + 1);
        self.plan(p, seed, image.width()).apply_with_tape(image)
    }

    pub fn counters(&self) -> (u64, u64) {
        (self.reals_augmented.get(), self.fakes_augmented.get())
    }
}
