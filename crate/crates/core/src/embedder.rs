//! Desk-scale feature embedder: a small convolutional classifier trained to
//! spot the one-sided lip notch in the synthetic face population, then frozen.
//! Its penultimate activations are the feature space used for distribution
//! comparison, and squared L2 in that space is the default perceptual
//! distance.
//!
//! Inputs are expected in [-1, 1]; images at a different resolution are
//! bilinearly resized first. Training is fully determined by the seed, so the
//! same seed always yields the same embedder.

use crate::error::Result;
use crate::geometry::{warp_bilinear, Affine2, Border};
use crate::img::Image;
use crate::metrics::{Embedder, PerceptualDistance};
use crate::nn::{sigmoid, Adam, AdamConfig, Conv2d, Downsample2x, LeakyRelu, Linear, Module, Param};
use crate::synthetic::{generate_faces, SyntheticFaceSpec};
use ndarray::{Array1, Array3};
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;

pub const DESK_EMBEDDER_DIM: usize = 32;

struct Net {
    convs: Vec<(Conv2d, LeakyRelu, Downsample2x)>,
    /// Input spatial size of each conv stage, plus the final 4x4.
    stage_res: Vec<usize>,
    /// Output channels of each conv stage.
    stage_ch: Vec<usize>,
    fc: Linear,
    fc_act: LeakyRelu,
    head: Linear,
}

impl Module for Net {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for (c, _, _) in &mut self.convs {
            c.visit_params(f);
        }
        self.fc.visit_params(f);
        self.head.visit_params(f);
    }
}

impl Net {
    fn new(resolution: usize, rng: &mut ChaCha8Rng) -> Net {
        // 3 -> 8 -> 16 -> 32 channels, halving resolution down to 4 px.
        let mut convs = Vec::new();
        let mut stage_res = Vec::new();
        let mut stage_ch = Vec::new();
        let mut ch = 3;
        let mut res = resolution;
        let mut i = 0;
        while res > 4 {
            let out = (8usize << i).min(32);
            convs.push((
                Conv2d::new(&format!("e{i}.conv"), ch, out, 3, rng),
                LeakyRelu::default(),
                Downsample2x { filtered: true },
            ));
            stage_res.push(res);
            stage_ch.push(out);
            ch = out;
            res /= 2;
            i += 1;
        }
        Net {
            convs,
            stage_res,
            stage_ch,
            fc: Linear::new("e.fc", ch * res * res, DESK_EMBEDDER_DIM, rng, 1.0),
            fc_act: LeakyRelu::default(),
            head: Linear::new("e.head", DESK_EMBEDDER_DIM, 1, rng, 1.0),
        }
    }

    /// Forward to the feature layer; `logit` additionally applies the head.
    fn features(&mut self, image: &Image) -> Array1<f64> {
        let mut x = image.data.clone();
        for (conv, act, down) in &mut self.convs {
            x = down.forward(&act.forward(&conv.forward(&x)));
        }
        let flat = Array1::from_iter(x.iter().copied());
        self.fc_act.forward(&self.fc.forward(&flat))
    }

    fn logit(&mut self, image: &Image) -> f64 {
        let f = self.features(image);
        self.head.forward(&f)[0]
    }

    fn backward_logit(&mut self, d_logit: f64) {
        let g = self.head.backward(&Array1::from_elem(1, d_logit), true);
        let g = self.fc.backward(&self.fc_act.backward(&g), true);
        let last = self.convs.len() - 1;
        let mut g3 =
            Array3::from_shape_vec((self.stage_ch[last], 4, 4), g.to_vec()).unwrap();
        for i in (0..self.convs.len()).rev() {
            let (conv, act, down) = &mut self.convs[i];
            let r = self.stage_res[i];
            g3 = down.backward(&g3, r, r);
            g3 = conv.backward(&act.backward(&g3), true);
        }
    }
}

pub struct DeskEmbedder {
    resolution: usize,
    net: RefCell<Net>,
}

#[derive(Debug, Clone)]
pub struct EmbedderTrainReport {
    pub final_accuracy: f64,
    pub epochs: usize,
    pub n_train: usize,
}

impl DeskEmbedder {
    /// Train the classifier on a freshly generated synthetic population and
    /// freeze it. Deterministic in `(resolution, seed)`.
    pub fn train(resolution: usize, seed: u64) -> Result<(DeskEmbedder, EmbedderTrainReport)> {
        let spec = SyntheticFaceSpec { resolution, cleft_fraction: 0.5, ..Default::default() };
        let n_train = 400;
        let faces = generate_faces(&spec, n_train, seed ^ 0x656d6264);
        let data: Vec<(Image, f64)> = faces
            .into_iter()
            .map(|(im, _, meta)| (im.to_signed(), if meta.has_notch { 1.0 } else { 0.0 }))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Net::new(resolution, &mut rng);
        let mut opt = Adam::new(AdamConfig { lr: 5e-3, beta1: 0.9, ..Default::default() });
        let epochs = 40;
        let batch = 8;
        let mut order: Vec<usize> = (0..n_train).collect();
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                net.zero_grads();
                for &i in chunk {
                    let (x, y) = &data[i];
                    let logit = net.logit(x);
                    // Logistic loss d/dlogit = sigmoid(logit) - y.
                    net.backward_logit((sigmoid(logit) - y) / chunk.len() as f64);
                }
                opt.step(&mut net);
            }
        }
        let mut correct = 0usize;
        for (x, y) in &data {
            let pred = if net.logit(x) > 0.0 { 1.0 } else { 0.0 };
            if pred == *y {
                correct += 1;
            }
        }
        let report = EmbedderTrainReport {
            final_accuracy: correct as f64 / n_train as f64,
            epochs,
            n_train,
        };
        Ok((DeskEmbedder { resolution, net: RefCell::new(net) }, report))
    }

    /// Persist the frozen parameters. Format: magic `GDEM`, u32 resolution,
    /// then per parameter a u16 name length, name, u32 element count, and
    /// f64 LE data, in visit order.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        use crate::error::Error;
        let mut buf: Vec<u8> = b"GDEM".to_vec();
        buf.extend_from_slice(&(self.resolution as u32).to_le_bytes());
        self.net.borrow_mut().visit_params(&mut |p| {
            buf.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
            buf.extend_from_slice(p.name.as_bytes());
            buf.extend_from_slice(&(p.value.len() as u32).to_le_bytes());
            for &v in p.value.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        });
        std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<DeskEmbedder> {
        use crate::error::Error;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::IncompatibleCheckpoint(format!("{}: {m}", path.display()));
        if bytes.len() < 8 || &bytes[..4] != b"GDEM" {
            return Err(bad("bad magic"));
        }
        let resolution = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Net::new(resolution, &mut rng);
        let mut pos = 8usize;
        let mut err = None;
        net.visit_params(&mut |p| {
            if err.is_some() {
                return;
            }
            let take = |pos: &mut usize, n: usize| -> Option<&[u8]> {
                let s = bytes.get(*pos..*pos + n)?;
                *pos += n;
                Some(s)
            };
            let parse = (|| -> Option<()> {
                let name_len =
                    u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
                let name = std::str::from_utf8(take(&mut pos, name_len)?).ok()?;
                if name != p.name {
                    return None;
                }
                let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
                if count != p.value.len() {
                    return None;
                }
                let raw = take(&mut pos, count * 8)?;
                for (slot, chunk) in p.value.iter_mut().zip(raw.chunks_exact(8)) {
                    *slot = f64::from_le_bytes(chunk.try_into().unwrap());
                }
                Some(())
            })();
            if parse.is_none() {
                err = Some(bad(&format!("parameter mismatch at {}", p.name)));
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(DeskEmbedder { resolution, net: RefCell::new(net) }),
        }
    }

    fn resized(&self, image: &Image) -> Option<Image> {
        if image.height() == self.resolution && image.width() == self.resolution {
            return None;
        }
        let s = image.width() as f64 / self.resolution as f64;
        // Output pixel centers map to source pixel centers.
        let inv = Affine2::translation(-0.5, -0.5)
            .compose(&Affine2::scale(s, s))
            .compose(&Affine2::translation(0.5, 0.5));
        Some(warp_bilinear(image, &inv, self.resolution, self.resolution, Border::Replicate))
    }
}

impl Embedder for DeskEmbedder {
    fn dim(&self) -> usize {
        DESK_EMBEDDER_DIM
    }

    fn embed(&self, image: &Image) -> Array1<f64> {
        let mut net = self.net.borrow_mut();
        match self.resized(image) {
            Some(r) => net.features(&r),
            None => net.features(image),
        }
    }
}

impl PerceptualDistance for DeskEmbedder {
    fn dist(&self, a: &Image, b: &Image) -> f64 {
        let fa = self.embed(a);
        let fb = self.embed(b);
        (&fa - &fb).mapv(|v| v * v).sum()
    }
}
