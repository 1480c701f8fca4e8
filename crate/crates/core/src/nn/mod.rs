//! Minimal reverse-mode neural network layers in `f64`.
//!
//! Layers cache what they need during `forward` and consume it in `backward`;
//! callers run forward/backward per sample and accumulate parameter gradients
//! across a batch. `backward(..., acc_grads = false)` propagates input
//! cotangents without touching parameter gradients, which the regularization
//! path of discriminator training relies on.
//!
//! Weight scaling follows the equalized-learning-rate convention: parameters
//! are stored in unit-variance form and multiplied by `gain / sqrt(fan_in)`
//! at use.

use ndarray::{Array1, Array2, Array3, ArrayD, Axis, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const LRELU_ALPHA: f64 = 0.2;
/// Activation gain keeping signal variance roughly constant.
pub const LRELU_GAIN: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    /// Learning-rate multiplier consumed by the optimizer.
    pub lr_mul: f64,
}

impl Param {
    pub fn new(name: impl Into<String>, value: ArrayD<f64>, lr_mul: f64) -> Param {
        let grad = ArrayD::zeros(value.shape());
        Param { name: name.into(), value, grad, lr_mul }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize], lr_mul: f64) -> Param {
        Param::new(name, ArrayD::zeros(IxDyn(shape)), lr_mul)
    }

    pub fn randn(
        name: impl Into<String>,
        shape: &[usize],
        rng: &mut ChaCha8Rng,
        lr_mul: f64,
    ) -> Param {
        let value = ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.sample(StandardNormal));
        Param::new(name, value, lr_mul)
    }
}

/// Anything holding trainable parameters.
pub trait Module {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param));

    fn zero_grads(&mut self) {
        self.visit_params(&mut |p| p.grad.fill(0.0));
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param, // (out, in)
    pub b: Param, // (out)
    scale: f64,
    cache_x: Option<Array1<f64>>,
}

impl Linear {
    pub fn new(name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng, lr_mul: f64) -> Linear {
        Linear {
            w: Param::randn(format!("{name}.w"), &[fan_out, fan_in], rng, lr_mul),
            b: Param::zeros(format!("{name}.b"), &[fan_out], lr_mul),
            scale: 1.0 / (fan_in as f64).sqrt(),
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Array1<f64>) -> Array1<f64> {
        let w = self.w.value.view().into_dimensionality::<ndarray::Ix2>().unwrap();
        let b = self.b.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let y = w.dot(x) * self.scale + &b;
        self.cache_x = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array1<f64>, acc_grads: bool) -> Array1<f64> {
        let x = self.cache_x.as_ref().expect("forward before backward");
        let w = self.w.value.view().into_dimensionality::<ndarray::Ix2>().unwrap();
        let dx = w.t().dot(dy) * self.scale;
        if acc_grads {
            let mut wg = self.w.grad.view_mut().into_dimensionality::<ndarray::Ix2>().unwrap();
            for (i, dyi) in dy.iter().enumerate() {
                let g = dyi * self.scale;
                for (j, xj) in x.iter().enumerate() {
                    wg[[i, j]] += g * xj;
                }
            }
            let mut bg = self.b.grad.view_mut().into_dimensionality::<ndarray::Ix1>().unwrap();
            for (i, dyi) in dy.iter().enumerate() {
                bg[i] += dyi;
            }
        }
        dx
    }
}

impl Module for Linear {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

// ---------------------------------------------------------------------------
// Conv2d (stride 1, zero padding preserving resolution)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Param, // (out, in, k, k)
    pub b: Param, // (out)
    k: usize,
    in_ch: usize,
    out_ch: usize,
    scale: f64,
    cache_cols: Option<Array2<f64>>,
    cache_hw: (usize, usize),
}

impl Conv2d {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, k: usize, rng: &mut ChaCha8Rng) -> Conv2d {
        assert!(k % 2 == 1);
        let fan_in = in_ch * k * k;
        Conv2d {
            w: Param::randn(format!("{name}.w"), &[out_ch, in_ch, k, k], rng, 1.0),
            b: Param::zeros(format!("{name}.b"), &[out_ch], 1.0),
            k,
            in_ch,
            out_ch,
            scale: 1.0 / (fan_in as f64).sqrt(),
            cache_cols: None,
            cache_hw: (0, 0),
        }
    }

    fn im2col(&self, x: &Array3<f64>) -> Array2<f64> {
        let (c, h, w) = x.dim();
        let k = self.k;
        let pad = (k - 1) / 2;
        let mut cols = Array2::zeros((c * k * k, h * w));
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        for xx in 0..w {
                            let sx = xx as isize + kx as isize - pad as isize;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            cols[[row, y * w + xx]] = x[[ci, sy, sx as usize]];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<f64>, h: usize, w: usize) -> Array3<f64> {
        let k = self.k;
        let pad = (k - 1) / 2;
        let mut dx = Array3::zeros((self.in_ch, h, w));
        for ci in 0..self.in_ch {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        for xx in 0..w {
                            let sx = xx as isize + kx as isize - pad as isize;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            dx[[ci, sy, sx as usize]] += dcols[[row, y * w + xx]];
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (c, h, w) = x.dim();
        assert_eq!(c, self.in_ch);
        let cols = self.im2col(x);
        let w_mat = self
            .w
            .value
            .view()
            .into_shape((self.out_ch, self.in_ch * self.k * self.k))
            .unwrap();
        let mut y = w_mat.dot(&cols) * self.scale;
        let b = self.b.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        for (mut row, bi) in y.rows_mut().into_iter().zip(b.iter()) {
            row += *bi;
        }
        self.cache_cols = Some(cols);
        self.cache_hw = (h, w);
        y.into_shape((self.out_ch, h, w)).unwrap()
    }

    pub fn backward(&mut self, dy: &Array3<f64>, acc_grads: bool) -> Array3<f64> {
        let (h, w) = self.cache_hw;
        let cols = self.cache_cols.as_ref().expect("forward before backward");
        let dy_mat = dy.view().into_shape((self.out_ch, h * w)).unwrap();
        if acc_grads {
            let dw = dy_mat.dot(&cols.t()) * self.scale;
            let mut wg = self
                .w
                .grad
                .view_mut()
                .into_shape((self.out_ch, self.in_ch * self.k * self.k))
                .unwrap();
            wg += &dw;
            let mut bg = self.b.grad.view_mut().into_dimensionality::<ndarray::Ix1>().unwrap();
            for (i, row) in dy_mat.rows().into_iter().enumerate() {
                bg[i] += row.sum();
            }
        }
        let w_mat = self
            .w
            .value
            .view()
            .into_shape((self.out_ch, self.in_ch * self.k * self.k))
            .unwrap();
        let dcols = w_mat.t().dot(&dy_mat) * self.scale;
        self.col2im(&dcols, h, w)
    }
}

impl Module for Conv2d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct LeakyRelu {
    cache_x: Option<ArrayD<f64>>,
}

impl LeakyRelu {
    pub fn forward<D: ndarray::Dimension>(
        &mut self,
        x: &ndarray::Array<f64, D>,
    ) -> ndarray::Array<f64, D> {
        self.cache_x = Some(x.clone().into_dyn());
        x.mapv(|v| if v >= 0.0 { v } else { LRELU_ALPHA * v } * LRELU_GAIN)
    }

    pub fn backward<D: ndarray::Dimension>(
        &mut self,
        dy: &ndarray::Array<f64, D>,
    ) -> ndarray::Array<f64, D> {
        let x = self.cache_x.as_ref().expect("forward before backward");
        let mut dx = dy.clone();
        for (d, xv) in dx.iter_mut().zip(x.iter()) {
            *d *= if *xv >= 0.0 { 1.0 } else { LRELU_ALPHA } * LRELU_GAIN;
        }
        dx
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tanh {
    cache_y: Option<Array3<f64>>,
}

impl Tanh {
    pub fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let y = x.mapv(f64::tanh);
        self.cache_y = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let y = self.cache_y.as_ref().expect("forward before backward");
        dy * &y.mapv(|v| 1.0 - v * v)
    }
}

/// Normalize a vector to unit RMS.
#[derive(Debug, Clone, Default)]
pub struct PixelNorm {
    cache: Option<(Array1<f64>, f64)>, // (x, 1/rms)
}

impl PixelNorm {
    pub fn forward(&mut self, x: &Array1<f64>) -> Array1<f64> {
        let n = x.len() as f64;
        let r = 1.0 / (x.iter().map(|v| v * v).sum::<f64>() / n + 1e-8).sqrt();
        self.cache = Some((x.clone(), r));
        x * r
    }

    pub fn backward(&mut self, dy: &Array1<f64>) -> Array1<f64> {
        let (x, r) = self.cache.as_ref().expect("forward before backward");
        let n = x.len() as f64;
        let s: f64 = dy.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        dy * *r - x * (r.powi(3) * s / n)
    }
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

/// 2x upsampler: nearest-neighbor, or half-pixel bilinear when filtered.
#[derive(Debug, Clone)]
pub struct Upsample2x {
    pub filtered: bool,
}

/// 1-D weights for filtered 2x upsampling at output index `j` of `2n`.
fn up_taps(j: usize, n: usize) -> [(usize, f64); 2] {
    let i = j / 2;
    if j % 2 == 0 {
        let left = i.saturating_sub(1).min(n - 1);
        if i == 0 {
            [(0, 1.0), (0, 0.0)]
        } else {
            [(left, 0.25), (i, 0.75)]
        }
    } else {
        let right = (i + 1).min(n - 1);
        [(i, 0.75), (right, 0.25)]
    }
}

impl Upsample2x {
    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (c, h, w) = x.dim();
        let mut y = Array3::zeros((c, 2 * h, 2 * w));
        if !self.filtered {
            for ci in 0..c {
                for yy in 0..2 * h {
                    for xx in 0..2 * w {
                        y[[ci, yy, xx]] = x[[ci, yy / 2, xx / 2]];
                    }
                }
            }
            return y;
        }
        for ci in 0..c {
            for yy in 0..2 * h {
                let ty = up_taps(yy, h);
                for xx in 0..2 * w {
                    let tx = up_taps(xx, w);
                    let mut acc = 0.0;
                    for &(iy, wy) in &ty {
                        for &(ix, wx) in &tx {
                            acc += wy * wx * x[[ci, iy, ix]];
                        }
                    }
                    y[[ci, yy, xx]] = acc;
                }
            }
        }
        y
    }

    pub fn backward(&self, dy: &Array3<f64>) -> Array3<f64> {
        let (c, h2, w2) = dy.dim();
        let (h, w) = (h2 / 2, w2 / 2);
        let mut dx = Array3::zeros((c, h, w));
        if !self.filtered {
            for ci in 0..c {
                for yy in 0..h2 {
                    for xx in 0..w2 {
                        dx[[ci, yy / 2, xx / 2]] += dy[[ci, yy, xx]];
                    }
                }
            }
            return dx;
        }
        for ci in 0..c {
            for yy in 0..h2 {
                let ty = up_taps(yy, h);
                for xx in 0..w2 {
                    let tx = up_taps(xx, w);
                    let g = dy[[ci, yy, xx]];
                    for &(iy, wy) in &ty {
                        for &(ix, wx) in &tx {
                            dx[[ci, iy, ix]] += wy * wx * g;
                        }
                    }
                }
            }
        }
        dx
    }
}

/// 2x downsampler: 2x2 average pooling, or a 4-tap tent filter when filtered.
#[derive(Debug, Clone)]
pub struct Downsample2x {
    pub filtered: bool,
}

fn down_taps(i: usize, n_in: usize) -> [(usize, f64); 4] {
    let base = 2 * i as isize;
    let idx = |d: isize| (base + d).clamp(0, n_in as isize - 1) as usize;
    [
        (idx(-1), 1.0 / 8.0),
        (idx(0), 3.0 / 8.0),
        (idx(1), 3.0 / 8.0),
        (idx(2), 1.0 / 8.0),
    ]
}

impl Downsample2x {
    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (c, h, w) = x.dim();
        let (ho, wo) = (h / 2, w / 2);
        let mut y = Array3::zeros((c, ho, wo));
        if !self.filtered {
            for ci in 0..c {
                for yy in 0..ho {
                    for xx in 0..wo {
                        y[[ci, yy, xx]] = 0.25
                            * (x[[ci, 2 * yy, 2 * xx]]
                                + x[[ci, 2 * yy + 1, 2 * xx]]
                                + x[[ci, 2 * yy, 2 * xx + 1]]
                                + x[[ci, 2 * yy + 1, 2 * xx + 1]]);
                    }
                }
            }
            return y;
        }
        for ci in 0..c {
            for yy in 0..ho {
                let ty = down_taps(yy, h);
                for xx in 0..wo {
                    let tx = down_taps(xx, w);
                    let mut acc = 0.0;
                    for &(iy, wy) in &ty {
                        for &(ix, wx) in &tx {
                            acc += wy * wx * x[[ci, iy, ix]];
                        }
                    }
                    y[[ci, yy, xx]] = acc;
                }
            }
        }
        y
    }

    pub fn backward(&self, dy: &Array3<f64>, h: usize, w: usize) -> Array3<f64> {
        let (c, ho, wo) = dy.dim();
        let mut dx = Array3::zeros((c, h, w));
        if !self.filtered {
            for ci in 0..c {
                for yy in 0..ho {
                    for xx in 0..wo {
                        let g = 0.25 * dy[[ci, yy, xx]];
                        dx[[ci, 2 * yy, 2 * xx]] += g;
                        dx[[ci, 2 * yy + 1, 2 * xx]] += g;
                        dx[[ci, 2 * yy, 2 * xx + 1]] += g;
                        dx[[ci, 2 * yy + 1, 2 * xx + 1]] += g;
                    }
                }
            }
            return dx;
        }
        for ci in 0..c {
            for yy in 0..ho {
                let ty = down_taps(yy, h);
                for xx in 0..wo {
                    let tx = down_taps(xx, w);
                    let g = dy[[ci, yy, xx]];
                    for &(iy, wy) in &ty {
                        for &(ix, wx) in &tx {
                            dx[[ci, iy, ix]] += wy * wx * g;
                        }
                    }
                }
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// Noise injection
// ---------------------------------------------------------------------------

/// Adds a learned-strength noise map, shared across channels.
#[derive(Debug, Clone)]
pub struct NoiseInject {
    pub strength: Param, // scalar
    cache_noise: Option<Array2<f64>>,
}

impl NoiseInject {
    pub fn new(name: &str) -> NoiseInject {
        NoiseInject { strength: Param::zeros(format!("{name}.noise_strength"), &[1], 1.0), cache_noise: None }
    }

    pub fn forward(&mut self, x: &Array3<f64>, noise: Array2<f64>) -> Array3<f64> {
        let s = self.strength.value[[0]];
        let mut y = x.clone();
        for mut ch in y.axis_iter_mut(Axis(0)) {
            ch += &(&noise * s);
        }
        self.cache_noise = Some(noise);
        y
    }

    pub fn backward(&mut self, dy: &Array3<f64>, acc_grads: bool) -> Array3<f64> {
        if acc_grads {
            let noise = self.cache_noise.as_ref().expect("forward before backward");
            let mut acc = 0.0;
            for ch in dy.axis_iter(Axis(0)) {
                acc += (&ch * noise).sum();
            }
            self.strength.grad[[0]] += acc;
        }
        dy.clone()
    }
}

impl Module for NoiseInject {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.strength);
    }
}

/// Deterministic noise map for one synthesis layer.
pub fn noise_map(seed: u64, layer: usize, h: usize, w: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((layer as u64) << 48) ^ 0x6e6f6973);
    Array2::from_shape_simple_fn((h, w), || rng.sample(StandardNormal))
}

use rand::SeedableRng;

// ---------------------------------------------------------------------------
// Style modulation
// ---------------------------------------------------------------------------

/// Per-channel affine styling from the intermediate latent:
/// `y[c] = x[c] * (1 + s[c]) + b[c]` with `(s, b) = affine(w)`.
#[derive(Debug, Clone)]
pub struct StyleMod {
    pub affine: Linear, // w_dim -> 2 * channels
    channels: usize,
    cache: Option<(Array3<f64>, Array1<f64>)>, // (x, style)
}

impl StyleMod {
    pub fn new(name: &str, w_dim: usize, channels: usize, rng: &mut ChaCha8Rng) -> StyleMod {
        StyleMod {
            affine: Linear::new(&format!("{name}.affine"), w_dim, 2 * channels, rng, 1.0),
            channels,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>, w: &Array1<f64>) -> Array3<f64> {
        let style = self.affine.forward(w);
        let mut y = x.clone();
        for (c, mut ch) in y.axis_iter_mut(Axis(0)).enumerate() {
            let s = 1.0 + style[c];
            let b = style[self.channels + c];
            ch.mapv_inplace(|v| v * s + b);
        }
        self.cache = Some((x.clone(), style));
        y
    }

    /// Returns `(dx, dw)`.
    pub fn backward(&mut self, dy: &Array3<f64>, acc_grads: bool) -> (Array3<f64>, Array1<f64>) {
        let (x, style) = self.cache.as_ref().expect("forward before backward");
        let mut dstyle = Array1::zeros(2 * self.channels);
        let mut dx = dy.clone();
        for c in 0..self.channels {
            let s = 1.0 + style[c];
            let dy_ch = dy.index_axis(Axis(0), c);
            let x_ch = x.index_axis(Axis(0), c);
            dstyle[c] = (&dy_ch * &x_ch).sum();
            dstyle[self.channels + c] = dy_ch.sum();
            dx.index_axis_mut(Axis(0), c).mapv_inplace(|v| v * s);
        }
        let dw = self.affine.backward(&dstyle, acc_grads);
        (dx, dw)
    }
}

impl Module for StyleMod {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.affine.visit_params(f);
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 2.5e-3, beta1: 0.0, beta2: 0.99, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    pub moments: std::collections::BTreeMap<String, (ArrayD<f64>, ArrayD<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Adam {
        Adam { config, t: 0, moments: Default::default() }
    }

    pub fn step(&mut self, module: &mut dyn Module) {
        self.t += 1;
        let c = self.config.clone();
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let moments = &mut self.moments;
        module.visit_params(&mut |p| {
            let (m, v) = moments
                .entry(p.name.clone())
                .or_insert_with(|| (ArrayD::zeros(p.value.shape()), ArrayD::zeros(p.value.shape())));
            let lr = c.lr * p.lr_mul;
            for ((pv, g), (mv, vv)) in p
                .value
                .iter_mut()
                .zip(p.grad.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mv = c.beta1 * *mv + (1.0 - c.beta1) * g;
                *vv = c.beta2 * *vv + (1.0 - c.beta2) * g * g;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + c.eps);
            }
        });
    }

    pub fn reset(&mut self) {
        self.t = 0;
        self.moments.clear();
    }
}

pub fn softplus(x: f64) -> f64 {
    // Numerically stable log(1 + e^x).
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
