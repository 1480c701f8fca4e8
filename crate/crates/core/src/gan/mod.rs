//! Style-based generator/discriminator pair with a transfer-learning
//! training loop at desk scale.

mod checkpoint;
mod discriminator;
mod generator;
mod paths;
mod train;

pub use checkpoint::Checkpoint;
pub use paths::GeneratorPaths;
pub use discriminator::Discriminator;
pub use generator::Generator;
pub use train::{
    finetune, generate_batch, pretrain, run_training, sample_grid, GeneratedBatch, StepStats,
    TickEvent, TrainConfig, TrainState, Trainer,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LatentPrior {
    #[default]
    Normal,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub w_dim: usize,
    pub mapping_layers: usize,
    pub base_resolution: usize,
    pub output_resolution: usize,
    /// Feature channels keyed by resolution.
    #[serde(with = "res_map")]
    pub channels_per_resolution: BTreeMap<usize, usize>,
    /// Low-pass filter on up/down-sampling instead of nearest/average.
    pub filtered_resampling: bool,
    pub prior: LatentPrior,
}

/// Integer-keyed maps are not representable in TOML/JSON, so the resolution
/// keys travel as strings.
mod res_map {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(m: &BTreeMap<usize, usize>, s: S) -> Result<S::Ok, S::Error> {
        let by_name: BTreeMap<String, usize> =
            m.iter().map(|(&k, &v)| (k.to_string(), v)).collect();
        by_name.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<usize, usize>, D::Error> {
        let by_name = BTreeMap::<String, usize>::deserialize(d)?;
        by_name
            .into_iter()
            .map(|(k, v)| {
                k.parse::<usize>()
                    .map(|k| (k, v))
                    .map_err(|_| serde::de::Error::custom(format!("bad resolution key {k:?}")))
            })
            .collect()
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        let channels_per_resolution =
            BTreeMap::from([(4, 64), (8, 32), (16, 16), (32, 8), (64, 8)]);
        ModelConfig {
            latent_dim: 64,
            w_dim: 64,
            mapping_layers: 2,
            base_resolution: 4,
            output_resolution: 32,
            channels_per_resolution,
            filtered_resampling: true,
            prior: LatentPrior::Normal,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.latent_dim >= 2
            && self.w_dim >= 1
            && self.mapping_layers >= 1
            && self.base_resolution.is_power_of_two()
            && self.output_resolution.is_power_of_two()
            && self.output_resolution >= self.base_resolution;
        if !ok {
            return Err(Error::BadConfig("model dimensions".into()));
        }
        for res in self.resolutions() {
            if !self.channels_per_resolution.contains_key(&res) {
                return Err(Error::BadConfig(format!("no channel count for resolution {res}")));
            }
        }
        Ok(())
    }

    pub fn channels(&self, resolution: usize) -> usize {
        self.channels_per_resolution[&resolution]
    }

    /// Synthesis resolutions, base through output.
    pub fn resolutions(&self) -> Vec<usize> {
        let mut v = Vec::new();
        let mut r = self.base_resolution;
        while r <= self.output_resolution {
            v.push(r);
            r *= 2;
        }
        v
    }
}
