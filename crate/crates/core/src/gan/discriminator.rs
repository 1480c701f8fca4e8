use super::ModelConfig;
use crate::img::Image;
use crate::nn::{Conv2d, Downsample2x, LeakyRelu, Linear, Module, Param};
use ndarray::{Array1, Array3};
use rand_chacha::ChaCha8Rng;

struct DBlock {
    resolution: usize,
    conv: Conv2d,
    act: LeakyRelu,
    down: Downsample2x,
}

pub struct Discriminator {
    pub config: ModelConfig,
    from_rgb: Conv2d,
    from_act: LeakyRelu,
    blocks: Vec<DBlock>,
    final_conv: Conv2d,
    final_act: LeakyRelu,
    fc: Linear,
    fc_act: LeakyRelu,
    out: Linear,
}

impl Discriminator {
    pub fn new(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Discriminator {
        let mut resolutions = config.resolutions();
        resolutions.reverse(); // output .. base
        let top_ch = config.channels(config.output_resolution);
        let from_rgb = Conv2d::new("from_rgb", 3, top_ch, 1, rng);
        let mut blocks = Vec::new();
        for &res in resolutions.iter().take(resolutions.len() - 1) {
            let ch_in = config.channels(res);
            let ch_out = config.channels(res / 2);
            blocks.push(DBlock {
                resolution: res,
                conv: Conv2d::new(&format!("b{res}.conv"), ch_in, ch_out, 3, rng),
                act: LeakyRelu::default(),
                down: Downsample2x { filtered: config.filtered_resampling },
            });
        }
        let base = config.base_resolution;
        let base_ch = config.channels(base);
        Discriminator {
            config: config.clone(),
            from_rgb,
            from_act: LeakyRelu::default(),
            blocks,
            final_conv: Conv2d::new("final.conv", base_ch, base_ch, 3, rng),
            final_act: LeakyRelu::default(),
            fc: Linear::new("fc", base_ch * base * base, base_ch, rng, 1.0),
            fc_act: LeakyRelu::default(),
            out: Linear::new("out", base_ch, 1, rng, 1.0),
        }
    }

    pub fn forward(&mut self, image: &Image) -> f64 {
        let mut x = self.from_act.forward(&self.from_rgb.forward(&image.data));
        for b in &mut self.blocks {
            x = b.down.forward(&b.act.forward(&b.conv.forward(&x)));
        }
        let x = self.final_act.forward(&self.final_conv.forward(&x));
        let flat = Array1::from_iter(x.iter().copied());
        let h = self.fc_act.forward(&self.fc.forward(&flat));
        self.out.forward(&h)[0]
    }

    /// Backprop through the last `forward`, returning the image cotangent.
    pub fn backward(&mut self, d_logit: f64, acc_grads: bool) -> Array3<f64> {
        let g = self.out.backward(&Array1::from_elem(1, d_logit), acc_grads);
        let g = self.fc.backward(&self.fc_act.backward(&g), acc_grads);
        let base = self.config.base_resolution;
        let base_ch = self.config.channels(base);
        let g = Array3::from_shape_vec((base_ch, base, base), g.to_vec()).unwrap();
        let mut g = self.final_conv.backward(&self.final_act.backward(&g), acc_grads);
        for b in self.blocks.iter_mut().rev() {
            let r = b.resolution;
            g = b.down.backward(&g, r, r);
            g = b.conv.backward(&b.act.backward(&g), acc_grads);
        }
        self.from_rgb.backward(&self.from_act.backward(&g), acc_grads)
    }
}

impl Module for Discriminator {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.from_rgb.visit_params(f);
        for b in &mut self.blocks {
            b.conv.visit_params(f);
        }
        self.final_conv.visit_params(f);
        self.fc.visit_params(f);
        self.out.visit_params(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            latent_dim: 8,
            w_dim: 8,
            output_resolution: 8,
            channels_per_resolution: [(4, 8), (8, 4)].into(),
            ..Default::default()
        }
    }

    fn random_image(rng: &mut ChaCha8Rng, r: usize) -> Image {
        Image::from_data(Array3::from_shape_simple_fn((3, r, r), || {
            rng.sample::<f64, _>(StandardNormal).tanh()
        }))
    }

    #[test]
    fn forward_is_deterministic_and_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Discriminator::new(&tiny_config(), &mut rng);
        let img = random_image(&mut rng, 8);
        let a = d.forward(&img);
        let b = d.forward(&img);
        assert!(a.is_finite());
        assert_eq!(a, b);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Discriminator::new(&tiny_config(), &mut rng);
        let img = random_image(&mut rng, 8);
        d.forward(&img);
        let dx = d.backward(1.0, false);
        let h = 1e-5;
        // Spot-check a handful of pixels.
        for &(c, y, x) in &[(0usize, 0usize, 0usize), (1, 3, 5), (2, 7, 7), (0, 4, 2)] {
            let mut p = img.clone();
            p.data[[c, y, x]] += h;
            let mut m = img.clone();
            m.data[[c, y, x]] -= h;
            let fd = (d.forward(&p) - d.forward(&m)) / (2.0 * h);
            let an = dx[[c, y, x]];
            let denom = an.abs().max(fd.abs()).max(1e-8);
            assert!((an - fd).abs() / denom < 1e-4, "({c},{y},{x}): {an} vs {fd}");
        }
    }
}
