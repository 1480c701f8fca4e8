use super::{Checkpoint, Discriminator, Generator, ModelConfig};
use crate::augment::{AdaState, AugmentOperator, AugmentationConfig, Regimen};
use crate::error::{Error, Result};
use crate::img::Image;
use crate::nn::{sigmoid, softplus, Adam, AdamConfig, Module};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub r1_gamma: f64,
    /// D steps between lazy R1 applications.
    pub r1_interval: usize,
    pub tick_images: u64,
    pub snapshot_ticks: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 10,
            adam: AdamConfig::default(),
            r1_gamma: 1.0,
            r1_interval: 16,
            tick_images: 1000,
            snapshot_ticks: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub images_seen: u64,
    pub tick_index: u64,
    pub d_steps: u64,
    pub seed: u64,
    pub ada: AdaState,
}

impl TrainState {
    pub fn new(seed: u64) -> TrainState {
        TrainState { images_seen: 0, tick_index: 0, d_steps: 0, seed, ada: AdaState::default() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub d_loss: f64,
    pub g_loss: f64,
    pub r1_penalty: Option<f64>,
    pub ada_p: f64,
}

pub struct Trainer {
    pub gen: Generator,
    pub disc: Discriminator,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub state: TrainState,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub operator: AugmentOperator,
}

/// Mix a stream label into a seed so derived RNGs are independent.
fn substream(seed: u64, label: u64, counter: u64) -> u64 {
    // splitmix64 over the combined words.
    let mut x = seed ^ label.rotate_left(17) ^ counter.wrapping_mul(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_LATENT: u64 = 3;
const STREAM_AUG_REAL: u64 = 4;
const STREAM_AUG_FAKE: u64 = 5;
const STREAM_NOISE: u64 = 6;
const STREAM_AUG_FAKE_D: u64 = 7;

impl Trainer {
    pub fn new(
        model: &ModelConfig,
        train: TrainConfig,
        aug: AugmentationConfig,
        seed: u64,
    ) -> Result<Trainer> {
        model.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, STREAM_INIT, 0));
        let gen = Generator::new(model, &mut rng);
        let disc = Discriminator::new(model, &mut rng);
        let mut state = TrainState::new(seed);
        if aug.regimen == Regimen::None {
            state.ada.p = 0.0;
        }
        Ok(Trainer {
            gen,
            disc,
            opt_g: Adam::new(train.adam.clone()),
            opt_d: Adam::new(train.adam.clone()),
            state,
            model_config: model.clone(),
            train_config: train,
            operator: AugmentOperator::new(aug),
        })
    }

    /// Augmentation probability currently in effect: fixed 0 for the `none`
    /// regimen, controller-driven otherwise.
    fn aug_p(&self) -> f64 {
        if self.operator.config.regimen == Regimen::None {
            0.0
        } else {
            self.state.ada.p
        }
    }

    /// One alternating D/G update on a batch of reals in [-1, 1].
    pub fn train_step(&mut self, reals: &[Image]) -> Result<StepStats> {
        let b = reals.len();
        if b != self.train_config.batch_size {
            return Err(Error::BadConfig(format!(
                "batch size {b} != configured {}",
                self.train_config.batch_size
            )));
        }
        let bf = b as f64;
        let step = self.state.images_seen;
        let p = self.aug_p();
        let mut latent_rng = ChaCha8Rng::seed_from_u64(substream(self.state.seed, STREAM_LATENT, step));
        let mut noise_rng = ChaCha8Rng::seed_from_u64(substream(self.state.seed, STREAM_NOISE, step));

        // --- Discriminator update ---
        self.disc.zero_grads();
        let mut d_loss = 0.0;
        let mut real_logits = Vec::with_capacity(b);
        let do_r1 = self.state.d_steps % self.train_config.r1_interval as u64 == 0;
        let mut r1_sum = 0.0;
        let mut aug_reals = Vec::with_capacity(b);
        for (i, real) in reals.iter().enumerate() {
            let seed = substream(self.state.seed, STREAM_AUG_REAL, step + i as u64);
            let xr = self.operator.augment_real(real, p, seed);
            let logit = self.disc.forward(&xr);
            real_logits.push(logit);
            d_loss += softplus(-logit) / bf;
            self.disc.backward(-sigmoid(-logit) / bf, true);
            aug_reals.push(xr);
        }
        if do_r1 {
            r1_sum = self.r1_accumulate(&aug_reals)?;
        }
        for i in 0..b {
            let z = self.gen.sample_latent(&mut latent_rng);
            let nseed = noise_rng.gen::<u64>();
            let fake = self.gen.generate(&z, nseed)?;
            let seed = substream(self.state.seed, STREAM_AUG_FAKE_D, step + i as u64);
            let (xf, _) = self.operator.augment_fake(&fake, p, seed);
            let logit = self.disc.forward(&xf);
            d_loss += softplus(logit) / bf;
            self.disc.backward(sigmoid(logit) / bf, true);
        }
        self.opt_d.step(&mut self.disc);

        // ADA reacts to D's judgment of the (augmented) reals.
        if self.operator.config.regimen != Regimen::None {
            crate::augment::ada_update(&mut self.state.ada, &real_logits);
        }

        // --- Generator update (non-saturating) ---
        self.gen.zero_grads();
        let mut g_loss = 0.0;
        for i in 0..b {
            let z = self.gen.sample_latent(&mut latent_rng);
            let nseed = noise_rng.gen::<u64>();
            let fake = self.gen.generate(&z, nseed)?;
            let seed = substream(self.state.seed, STREAM_AUG_FAKE, step + i as u64);
            let (xf, applied) = self.operator.augment_fake(&fake, p, seed);
            let logit = self.disc.forward(&xf);
            g_loss += softplus(-logit) / bf;
            let d_img = self.disc.backward(-sigmoid(-logit) / bf, false);
            let d_fake = applied.vjp(&Image::from_data(d_img));
            self.gen.backward(&d_fake.data, true);
        }
        self.opt_g.step(&mut self.gen);

        self.state.images_seen += b as u64;
        self.state.tick_index = self.state.images_seen / self.train_config.tick_images;
        self.state.d_steps += 1;

        let stats = StepStats {
            d_loss,
            g_loss,
            r1_penalty: do_r1.then_some(r1_sum),
            ada_p: self.state.ada.p,
        };
        if !d_loss.is_finite() || !g_loss.is_finite() {
            return Err(Error::TrainingDiverged { images_seen: self.state.images_seen });
        }
        Ok(stats)
    }

    /// Accumulate the gradient of the (lazy) R1 penalty into D.
    ///
    /// The penalty is (γ/2)·E[‖∇ₓD(x)‖²]. Its parameter gradient equals the
    /// parameter gradient of the directional derivative of D along the
    /// detached input gradient g, which we evaluate with a symmetric probe
    /// x ± εu. D is piecewise linear in x (convolutions and leaky ReLUs),
    /// so the probe is exact almost everywhere.
    fn r1_accumulate(&mut self, reals: &[Image]) -> Result<f64> {
        let bf = reals.len() as f64;
        let gamma = self.train_config.r1_gamma;
        let lazy = self.train_config.r1_interval as f64;
        let eps = 1e-4;
        let mut penalty = 0.0;
        for x in reals {
            self.disc.forward(x);
            let g = self.disc.backward(1.0, false);
            let norm_sq: f64 = g.iter().map(|v| v * v).sum();
            penalty += 0.5 * gamma * norm_sq / bf;
            let norm = norm_sq.sqrt();
            if norm < 1e-12 {
                continue;
            }
            let u = &g / norm;
            // d/dθ (γ/2)·‖g‖² = γ·gᵀ·dg/dθ = γ·‖g‖ · d/dθ [ (D(x+εu) - D(x-εu)) / 2ε ]
            let coeff = gamma * norm * lazy / (bf * 2.0 * eps);
            let mut xp = x.clone();
            xp.data += &(&u * eps);
            let mut xm = x.clone();
            xm.data -= &(&u * eps);
            self.disc.forward(&xp);
            self.disc.backward(coeff, true);
            self.disc.forward(&xm);
            self.disc.backward(-coeff, true);
        }
        Ok(penalty)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TickEvent {
    pub tick_index: u64,
    pub images_seen: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub ada_p: f64,
}

/// Drive a trainer for `budget_images` over a dataset, sampling batches with
/// replacement. Calls `on_tick` at every tick boundary and writes snapshot
/// checkpoints every `snapshot_ticks` when `out_dir` is given.
pub fn run_training(
    trainer: &mut Trainer,
    dataset: &[Image],
    budget_images: u64,
    out_dir: Option<&Path>,
    mut on_tick: impl FnMut(&mut Trainer, TickEvent) -> Result<()>,
) -> Result<()> {
    let batch = trainer.train_config.batch_size;
    if dataset.len() < batch {
        return Err(Error::DatasetTooSmall { need: batch, got: dataset.len() });
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let target = trainer.state.images_seen + budget_images;
    let mut last_stats: Option<StepStats> = None;
    while trainer.state.images_seen < target {
        let mut data_rng = ChaCha8Rng::seed_from_u64(substream(
            trainer.state.seed,
            STREAM_DATA,
            trainer.state.images_seen,
        ));
        let reals: Vec<Image> = (0..batch)
            .map(|_| dataset[data_rng.gen_range(0..dataset.len())].clone())
            .collect();
        let prev_tick = trainer.state.tick_index;
        let stats = match trainer.train_step(&reals) {
            Ok(s) => s,
            Err(Error::TrainingDiverged { images_seen }) => {
                if let Some(dir) = out_dir {
                    let ckpt = Checkpoint::from_trainer(trainer);
                    ckpt.save(&dir.join("diverged.ckpt"))?;
                }
                return Err(Error::TrainingDiverged { images_seen });
            }
            Err(e) => return Err(e),
        };
        last_stats = Some(stats);
        if trainer.state.tick_index > prev_tick {
            let ev = TickEvent {
                tick_index: trainer.state.tick_index,
                images_seen: trainer.state.images_seen,
                d_loss: stats.d_loss,
                g_loss: stats.g_loss,
                ada_p: stats.ada_p,
            };
            on_tick(trainer, ev)?;
            if let Some(dir) = out_dir {
                if trainer.state.tick_index % trainer.train_config.snapshot_ticks == 0 {
                    let ckpt = Checkpoint::from_trainer(trainer);
                    ckpt.save(&dir.join(format!("tick{:06}.ckpt", trainer.state.tick_index)))?;
                }
            }
        }
    }
    let _ = last_stats;
    Ok(())
}

/// Train from scratch on a plentiful source dataset.
pub fn pretrain(
    model: &ModelConfig,
    train: TrainConfig,
    aug: AugmentationConfig,
    dataset: &[Image],
    budget_kimg: u64,
    seed: u64,
    out_dir: Option<&Path>,
    on_tick: impl FnMut(&mut Trainer, TickEvent) -> Result<()>,
) -> Result<Trainer> {
    let mut trainer = Trainer::new(model, train, aug, seed)?;
    run_training(&mut trainer, dataset, budget_kimg * 1000, out_dir, on_tick)?;
    Ok(trainer)
}

/// Continue from a source checkpoint on a small target set: parameters come
/// from the checkpoint, optimizer state and progress counters start fresh.
pub fn finetune(
    source: &Checkpoint,
    aug: AugmentationConfig,
    dataset: &[Image],
    budget_kimg: u64,
    seed: u64,
    out_dir: Option<&Path>,
    on_tick: impl FnMut(&mut Trainer, TickEvent) -> Result<()>,
) -> Result<Trainer> {
    let mut trainer = source.to_trainer()?;
    trainer.opt_g.reset();
    trainer.opt_d.reset();
    trainer.state = TrainState::new(seed);
    trainer.operator = AugmentOperator::new(aug);
    run_training(&mut trainer, dataset, budget_kimg * 1000, out_dir, on_tick)?;
    Ok(trainer)
}

pub struct GeneratedBatch {
    pub images: Vec<Image>,
    pub latents: Vec<Array1<f64>>,
    pub noise_seeds: Vec<u64>,
}

/// Sample `n` images from the prior with a reproducible latent log.
pub fn generate_batch(gen: &mut Generator, n: usize, seed: u64) -> Result<GeneratedBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, STREAM_LATENT, 0));
    let mut images = Vec::with_capacity(n);
    let mut latents = Vec::with_capacity(n);
    let mut noise_seeds = Vec::with_capacity(n);
    for _ in 0..n {
        let z = gen.sample_latent(&mut rng);
        let nseed = rng.gen::<u64>();
        images.push(gen.generate(&z, nseed)?);
        latents.push(z);
        noise_seeds.push(nseed);
    }
    Ok(GeneratedBatch { images, latents, noise_seeds })
}

/// Tile images row-major into a square grid (values stay in [-1, 1]).
pub fn sample_grid(images: &[Image], per_side: usize) -> Image {
    assert!(!images.is_empty() && images.len() >= per_side * per_side);
    let r = images[0].height();
    let mut grid = Image::zeros(per_side * r, per_side * r);
    for gy in 0..per_side {
        for gx in 0..per_side {
            let img = &images[gy * per_side + gx];
            for c in 0..3 {
                for y in 0..r {
                    for x in 0..r {
                        grid.data[[c, gy * r + y, gx * r + x]] = img.data[[c, y, x]];
                    }
                }
            }
        }
    }
    grid
}
