use super::{LatentPrior, ModelConfig};
use crate::error::{Error, Result};
use crate::img::Image;
use crate::nn::{
    noise_map, Conv2d, LeakyRelu, Linear, Module, NoiseInject, Param, PixelNorm, StyleMod, Tanh,
    Upsample2x,
};
use ndarray::{Array1, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct SynthBlock {
    resolution: usize,
    upsample: Option<Upsample2x>,
    conv: Conv2d,
    style: StyleMod,
    noise: NoiseInject,
    act: LeakyRelu,
}

impl Module for SynthBlock {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_params(f);
        self.style.visit_params(f);
        self.noise.visit_params(f);
    }
}

pub struct Generator {
    pub config: ModelConfig,
    map_norm: PixelNorm,
    map_layers: Vec<(Linear, LeakyRelu)>,
    const_input: Param,
    blocks: Vec<SynthBlock>,
    to_rgb: Conv2d,
    out_act: Tanh,
    cache_w: Option<Array1<f64>>,
}

impl Generator {
    pub fn new(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Generator {
        let mut map_layers = Vec::new();
        for i in 0..config.mapping_layers {
            let fan_in = if i == 0 { config.latent_dim } else { config.w_dim };
            map_layers
                .push((Linear::new(&format!("map.{i}"), fan_in, config.w_dim, rng, 1.0), LeakyRelu::default()));
        }
        let base_ch = config.channels(config.base_resolution);
        let const_input = Param::randn(
            "const",
            &[base_ch, config.base_resolution, config.base_resolution],
            rng,
            1.0,
        );
        let mut blocks = Vec::new();
        let mut prev_ch = base_ch;
        for (i, res) in config.resolutions().into_iter().enumerate() {
            let ch = config.channels(res);
            blocks.push(SynthBlock {
                resolution: res,
                upsample: (i > 0).then_some(Upsample2x { filtered: config.filtered_resampling }),
                conv: Conv2d::new(&format!("b{res}.conv"), prev_ch, ch, 3, rng),
                style: StyleMod::new(&format!("b{res}.style"), config.w_dim, ch, rng),
                noise: NoiseInject::new(&format!("b{res}")),
                act: LeakyRelu::default(),
            });
            prev_ch = ch;
        }
        let to_rgb = Conv2d::new("to_rgb", prev_ch, 3, 1, rng);
        Generator {
            config: config.clone(),
            map_norm: PixelNorm::default(),
            map_layers,
            const_input,
            blocks,
            to_rgb,
            out_act: Tanh::default(),
            cache_w: None,
        }
    }

    /// Draw one latent from the configured prior.
    pub fn sample_latent(&self, rng: &mut ChaCha8Rng) -> Array1<f64> {
        match self.config.prior {
            LatentPrior::Normal => {
                Array1::from_shape_simple_fn(self.config.latent_dim, || rng.sample(StandardNormal))
            }
            LatentPrior::Uniform => {
                Array1::from_shape_simple_fn(self.config.latent_dim, || rng.gen_range(-1.0..1.0))
            }
        }
    }

    /// z -> w through the normalized mapping network.
    pub fn map_latent(&mut self, z: &Array1<f64>) -> Result<Array1<f64>> {
        if z.len() != self.config.latent_dim {
            return Err(Error::DimensionMismatch { expected: self.config.latent_dim, got: z.len() });
        }
        let mut x = self.map_norm.forward(z);
        for (lin, act) in &mut self.map_layers {
            x = act.forward(&lin.forward(&x));
        }
        Ok(x)
    }

    fn backward_mapping(&mut self, dw: &Array1<f64>, acc_grads: bool) -> Array1<f64> {
        let mut g = dw.clone();
        for (lin, act) in self.map_layers.iter_mut().rev() {
            g = lin.backward(&act.backward(&g), acc_grads);
        }
        self.map_norm.backward(&g)
    }

    /// w -> image in [-1, 1]. Deterministic in `(w, noise_seed)`.
    pub fn synthesize(&mut self, w: &Array1<f64>, noise_seed: u64) -> Result<Image> {
        if w.len() != self.config.w_dim {
            return Err(Error::DimensionMismatch { expected: self.config.w_dim, got: w.len() });
        }
        let mut x = self
            .const_input
            .value
            .view()
            .into_dimensionality::<ndarray::Ix3>()
            .unwrap()
            .to_owned();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            if let Some(up) = &block.upsample {
                x = up.forward(&x);
            }
            x = block.conv.forward(&x);
            x = block.style.forward(&x, w);
            let r = block.resolution;
            x = block.noise.forward(&x, noise_map(noise_seed, i, r, r));
            x = block.act.forward(&x);
        }
        let rgb = self.out_act.forward(&self.to_rgb.forward(&x));
        self.cache_w = Some(w.clone());
        Ok(Image::from_data(rgb))
    }

    pub fn generate(&mut self, z: &Array1<f64>, noise_seed: u64) -> Result<Image> {
        let w = self.map_latent(z)?;
        self.synthesize(&w, noise_seed)
    }

    /// Backprop an image cotangent through the last `synthesize` call,
    /// returning the w cotangent (mapping network untouched).
    pub fn backward_synthesis(&mut self, d_img: &Array3<f64>, acc_grads: bool) -> Array1<f64> {
        let mut g = self.to_rgb.backward(&self.out_act.backward(d_img), acc_grads);
        let mut dw_total = Array1::zeros(self.config.w_dim);
        for block in self.blocks.iter_mut().rev() {
            g = block.act.backward(&g);
            g = block.noise.backward(&g, acc_grads);
            let (dx, dw) = block.style.backward(&g, acc_grads);
            dw_total += &dw;
            g = block.conv.backward(&dx, acc_grads);
            if let Some(up) = &block.upsample {
                g = up.backward(&g);
            }
        }
        if acc_grads {
            let mut cg = self
                .const_input
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix3>()
                .unwrap();
            cg += &g;
        }
        dw_total
    }

    /// Full backward through the last `generate` call; returns the z cotangent.
    pub fn backward(&mut self, d_img: &Array3<f64>, acc_grads: bool) -> Array1<f64> {
        let dw = self.backward_synthesis(d_img, acc_grads);
        self.backward_mapping(&dw, acc_grads)
    }
}

impl Module for Generator {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for (lin, _) in &mut self.map_layers {
            lin.visit_params(f);
        }
        f(&mut self.const_input);
        for b in &mut self.blocks {
            b.visit_params(f);
        }
        self.to_rgb.visit_params(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            latent_dim: 8,
            w_dim: 8,
            mapping_layers: 2,
            output_resolution: 8,
            channels_per_resolution: [(4, 8), (8, 4)].into(),
            ..Default::default()
        }
    }

    fn randn(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
        Array1::from_shape_simple_fn(n, || rng.sample(StandardNormal))
    }

    #[test]
    fn map_latent_is_deterministic_and_sized() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Generator::new(&tiny_config(), &mut rng);
        let z = randn(&mut rng, 8);
        let w1 = g.map_latent(&z).unwrap();
        let w2 = g.map_latent(&z).unwrap();
        assert_eq!(w1.len(), 8);
        assert_eq!(w1, w2);
    }

    #[test]
    fn zeroed_mapping_sends_everything_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Generator::new(&tiny_config(), &mut rng);
        for (lin, _) in &mut g.map_layers {
            lin.w.value.fill(0.0);
            lin.b.value.fill(0.0);
        }
        let z = randn(&mut rng, 8);
        assert!(g.map_latent(&z).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_latent_size_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = Generator::new(&tiny_config(), &mut rng);
        assert!(g.map_latent(&Array1::zeros(5)).is_err());
    }

    #[test]
    fn synthesize_is_deterministic_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Generator::new(&tiny_config(), &mut rng);
        let z = randn(&mut rng, 8);
        let a = g.generate(&z, 7).unwrap();
        let b = g.generate(&z, 7).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.data.dim(), (3, 8, 8));
        assert!(a.data.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn different_styles_give_different_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = Generator::new(&tiny_config(), &mut rng);
        let z1 = randn(&mut rng, 8);
        let z2 = randn(&mut rng, 8);
        let a = g.generate(&z1, 7).unwrap();
        let b = g.generate(&z2, 7).unwrap();
        let diff: f64 = (&a.data - &b.data).mapv(f64::abs).sum();
        assert!(diff > 1e-6);
    }

    #[test]
    fn noise_perturbs_less_than_style() {
        // With strengths at their zero init the noise seed changes nothing;
        // after bumping the strengths the perturbation stays below the style
        // effect.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Generator::new(&tiny_config(), &mut rng);
        let z1 = randn(&mut rng, 8);
        let z2 = randn(&mut rng, 8);
        let a0 = g.generate(&z1, 1).unwrap();
        let b0 = g.generate(&z1, 2).unwrap();
        assert_eq!(a0.data, b0.data);
        for b in &mut g.blocks {
            b.noise.strength.value.fill(0.05);
        }
        let a = g.generate(&z1, 1).unwrap();
        let b = g.generate(&z1, 2).unwrap();
        let c = g.generate(&z2, 1).unwrap();
        let noise_delta: f64 =
            (&a.data - &b.data).mapv(f64::abs).iter().fold(0.0_f64, |m, v| m.max(*v));
        let style_delta: f64 =
            (&a.data - &c.data).mapv(f64::abs).iter().fold(0.0_f64, |m, v| m.max(*v));
        assert!(noise_delta > 0.0);
        assert!(noise_delta < style_delta, "{noise_delta} vs {style_delta}");
    }

    #[test]
    fn mapping_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut g = Generator::new(&tiny_config(), &mut rng);
        let z = randn(&mut rng, 8);
        let dir = randn(&mut rng, 8); // fixed cotangent on w
        g.map_latent(&z).unwrap();
        let dz = g.backward_mapping(&dir, false);
        let h = 1e-4;
        for i in 0..8 {
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let lp: f64 = g.map_latent(&zp).unwrap().dot(&dir);
            let lm: f64 = g.map_latent(&zm).unwrap().dot(&dir);
            let fd = (lp - lm) / (2.0 * h);
            let denom = dz[i].abs().max(fd.abs()).max(1e-8);
            assert!((dz[i] - fd).abs() / denom < 1e-3, "i={i}: {} vs {fd}", dz[i]);
        }
    }
}
