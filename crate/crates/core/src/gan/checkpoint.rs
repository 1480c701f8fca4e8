//! Versioned checkpoint container.
//!
//! Layout (all integers little-endian):
//! ```text
//! magic   b"GDCK"
//! version u32
//! meta    u64 length + JSON (configs, counters, optimizer step counts)
//! arrays  u64 count, then per array:
//!         u16 name length, name (UTF-8),
//!         u8 ndim, u64 dims…, f64 data…
//! ```
//! Array names carry a prefix for their owner: `g.` / `d.` for parameters,
//! `am_g.` / `av_g.` / `am_d.` / `av_d.` for Adam first/second moments.

use super::{Discriminator, Generator, ModelConfig, TrainConfig, TrainState, Trainer};
use crate::augment::AugmentationConfig;
use crate::error::{Error, Result};
use crate::nn::{Adam, Module};
use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"GDCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    model: ModelConfig,
    train: TrainConfig,
    aug: AugmentationConfig,
    state: TrainState,
    adam_g_t: u64,
    adam_d_t: u64,
}

pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub aug: AugmentationConfig,
    pub state: TrainState,
    adam_g_t: u64,
    adam_d_t: u64,
    arrays: BTreeMap<String, ArrayD<f64>>,
}

fn collect(prefix: &str, module: &mut dyn Module, into: &mut BTreeMap<String, ArrayD<f64>>) {
    module.visit_params(&mut |p| {
        into.insert(format!("{prefix}{}", p.name), p.value.clone());
    });
}

fn collect_adam(tag: &str, opt: &Adam, into: &mut BTreeMap<String, ArrayD<f64>>) {
    for (name, (m, v)) in &opt.moments {
        into.insert(format!("am_{tag}.{name}"), m.clone());
        into.insert(format!("av_{tag}.{name}"), v.clone());
    }
}

fn restore(prefix: &str, module: &mut dyn Module, from: &BTreeMap<String, ArrayD<f64>>) -> Result<()> {
    let mut err = None;
    module.visit_params(&mut |p| {
        if err.is_some() {
            return;
        }
        let key = format!("{prefix}{}", p.name);
        match from.get(&key) {
            Some(a) if a.shape() == p.value.shape() => p.value.assign(a),
            Some(a) => {
                err = Some(Error::IncompatibleCheckpoint(format!(
                    "{key}: shape {:?} != {:?}",
                    a.shape(),
                    p.value.shape()
                )))
            }
            None => err = Some(Error::IncompatibleCheckpoint(format!("missing array {key}"))),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn restore_adam(tag: &str, t: u64, opt: &mut Adam, from: &BTreeMap<String, ArrayD<f64>>) {
    opt.t = t;
    opt.moments.clear();
    let mp = format!("am_{tag}.");
    for (key, m) in from.range(mp.clone()..) {
        let Some(name) = key.strip_prefix(&mp) else { break };
        let v = &from[&format!("av_{tag}.{name}")];
        opt.moments.insert(name.to_string(), (m.clone(), v.clone()));
    }
}

impl Checkpoint {
    pub fn from_trainer(trainer: &mut Trainer) -> Checkpoint {
        let mut arrays = BTreeMap::new();
        collect("g.", &mut trainer.gen, &mut arrays);
        collect("d.", &mut trainer.disc, &mut arrays);
        collect_adam("g", &trainer.opt_g, &mut arrays);
        collect_adam("d", &trainer.opt_d, &mut arrays);
        Checkpoint {
            model: trainer.model_config.clone(),
            train: trainer.train_config.clone(),
            aug: trainer.operator.config.clone(),
            state: trainer.state.clone(),
            adam_g_t: trainer.opt_g.t,
            adam_d_t: trainer.opt_d.t,
            arrays,
        }
    }

    pub fn to_trainer(&self) -> Result<Trainer> {
        let mut trainer =
            Trainer::new(&self.model, self.train.clone(), self.aug.clone(), self.state.seed)?;
        restore("g.", &mut trainer.gen, &self.arrays)?;
        restore("d.", &mut trainer.disc, &self.arrays)?;
        restore_adam("g", self.adam_g_t, &mut trainer.opt_g, &self.arrays);
        restore_adam("d", self.adam_d_t, &mut trainer.opt_d, &self.arrays);
        trainer.state = self.state.clone();
        Ok(trainer)
    }

    /// Generator only, for inference.
    pub fn generator(&self) -> Result<Generator> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut gen = Generator::new(&self.model, &mut rng);
        restore("g.", &mut gen, &self.arrays)?;
        Ok(gen)
    }

    pub fn discriminator(&self) -> Result<Discriminator> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut disc = Discriminator::new(&self.model, &mut rng);
        restore("d.", &mut disc, &self.arrays)?;
        Ok(disc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = Meta {
            model: self.model.clone(),
            train: self.train.clone(),
            aug: self.aug.clone(),
            state: self.state.clone(),
            adam_g_t: self.adam_g_t,
            adam_d_t: self.adam_d_t,
        };
        let meta_json = serde_json::to_vec(&meta).expect("meta serializes");
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&meta_json);
        buf.extend_from_slice(&(self.arrays.len() as u64).to_le_bytes());
        for (name, arr) in &self.arrays {
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.push(arr.ndim() as u8);
            for &d in arr.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in arr.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::IncompatibleCheckpoint(format!("{}: {msg}", path.display()));
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            if pos + n > bytes.len() {
                return Err(bad("truncated"));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let meta_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let meta: Meta = serde_json::from_slice(take(meta_len)?)
            .map_err(|e| Error::json(path, e))?;
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut arrays = BTreeMap::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(name_len)?)
                .map_err(|_| bad("non-utf8 array name"))?
                .to_string();
            let ndim = take(1)?[0] as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
            }
            let n: usize = dims.iter().product();
            let raw = take(n * 8)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.insert(
                name,
                ArrayD::from_shape_vec(IxDyn(&dims), data).map_err(|_| bad("bad array shape"))?,
            );
        }
        Ok(Checkpoint {
            model: meta.model,
            train: meta.train,
            aug: meta.aug,
            state: meta.state,
            adam_g_t: meta.adam_g_t,
            adam_d_t: meta.adam_d_t,
            arrays,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{AugmentationConfig, Regimen};
    use crate::gan::generate_batch;
    use ndarray::Array1;

    fn tiny_trainer(seed: u64) -> Trainer {
        let model = ModelConfig {
            latent_dim: 8,
            w_dim: 8,
            output_resolution: 8,
            channels_per_resolution: [(4, 8), (8, 4)].into(),
            ..Default::default()
        };
        let train = TrainConfig { batch_size: 4, ..Default::default() };
        Trainer::new(&model, train, AugmentationConfig::with_regimen(Regimen::Bgc), seed).unwrap()
    }

    #[test]
    fn round_trip_preserves_forward_outputs_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = tiny_trainer(1);
        // A couple of steps so optimizer state is nontrivial.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        use rand::Rng;
        use rand_distr::StandardNormal;
        let reals: Vec<_> = (0..4)
            .map(|_| {
                crate::img::Image::from_data(ndarray::Array3::from_shape_simple_fn(
                    (3, 8, 8),
                    || rng.sample::<f64, _>(StandardNormal).tanh(),
                ))
            })
            .collect();
        t.train_step(&reals).unwrap();
        t.train_step(&reals).unwrap();
        let path = dir.path().join("t.ckpt");
        Checkpoint::from_trainer(&mut t).save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let mut t2 = loaded.to_trainer().unwrap();
        assert_eq!(t2.state, t.state);
        assert_eq!(t2.opt_g.t, t.opt_g.t);
        let out1 = generate_batch(&mut t.gen, 3, 5).unwrap();
        let out2 = generate_batch(&mut t2.gen, 3, 5).unwrap();
        for (a, b) in out1.images.iter().zip(&out2.images) {
            assert_eq!(a.data, b.data);
        }
        let logit1 = t.disc.forward(&out1.images[0]);
        let logit2 = t2.disc.forward(&out1.images[0]);
        assert_eq!(logit1.to_bits(), logit2.to_bits());
        // Training continues identically after reload.
        let s1 = t.train_step(&reals).unwrap();
        let s2 = t2.train_step(&reals).unwrap();
        assert_eq!(s1.d_loss.to_bits(), s2.d_loss.to_bits());
        assert_eq!(s1.g_loss.to_bits(), s2.g_loss.to_bits());
    }

    #[test]
    fn incompatible_shapes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = tiny_trainer(1);
        let path = dir.path().join("t.ckpt");
        let mut ckpt = Checkpoint::from_trainer(&mut t);
        ckpt.arrays.insert("g.const".into(), Array1::zeros(3).into_dyn());
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert!(matches!(loaded.to_trainer(), Err(Error::IncompatibleCheckpoint(_))));
    }

    #[test]
    fn corrupt_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
