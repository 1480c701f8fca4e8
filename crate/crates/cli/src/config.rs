//! Experiment configuration: one TOML file drives dataset synthesis,
//! training, the evaluation suite, and the grid/comparison harnesses.

use anyhow::{bail, Context};
use facegen_core::augment::{AugmentationConfig, Regimen};
use facegen_core::gan::{ModelConfig, TrainConfig};
use facegen_core::metrics::PplInterpolation;
use facegen_core::severity::AsymmetryProxyConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelConfig,
    pub augmentation: AugmentationSection,
    pub training: TrainingSection,
    pub metrics: MetricsSection,
    pub severity: SeveritySection,
    pub grid: GridSection,
    pub compare: CompareSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    /// `synthetic` or a directory produced by `prep`/`synth-data`.
    pub source: String,
    pub resolution: usize,
    /// Target-population size.
    pub n: usize,
    pub cleft_fraction: f64,
    /// Population used for source-domain pretraining (no deformity).
    pub pretrain_n: usize,
    pub seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            source: "synthetic".into(),
            resolution: 32,
            n: 514,
            cleft_fraction: 0.5,
            pretrain_n: 2000,
            seed: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationSection {
    pub regimen: Regimen,
}

impl Default for AugmentationSection {
    fn default() -> Self {
        AugmentationSection { regimen: Regimen::Bgc }
    }
}

impl AugmentationSection {
    pub fn to_config(&self) -> AugmentationConfig {
        AugmentationConfig::with_regimen(self.regimen)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSection {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub budget_kimg: u64,
    pub pretrain_kimg: u64,
    pub eval_every_ticks: u64,
    pub transfer: bool,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            train: TrainConfig::default(),
            budget_kimg: 30,
            pretrain_kimg: 100,
            eval_every_ticks: 5,
            transfer: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSection {
    /// Generated-set size for FID; 0 means match the real set.
    pub fid_n: usize,
    pub ppl_paths: usize,
    pub ppl_interpolation: PplInterpolation,
    pub dish_bins: usize,
    /// Generated-set size for the severity histogram; 0 matches the real set.
    pub dish_n: usize,
    /// Seed for the frozen desk embedder's training run.
    pub embedder_seed: u64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            fid_n: 0,
            ppl_paths: 1000,
            ppl_interpolation: PplInterpolation::SlerpZ,
            dish_bins: 20,
            dish_n: 0,
            embedder_seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeveritySection {
    pub scorer: String,
    pub proxy: AsymmetryProxyConfig,
}

impl Default for SeveritySection {
    fn default() -> Self {
        SeveritySection { scorer: "asymmetry_proxy".into(), proxy: AsymmetryProxyConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSection {
    pub sample_sizes: Vec<usize>,
    pub regimens: Vec<Regimen>,
    pub transfer: Vec<bool>,
    pub seeds: Vec<u64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            sample_sizes: vec![250, 450, 514],
            regimens: vec![Regimen::None, Regimen::C, Regimen::Bg, Regimen::Bgc],
            transfer: vec![true],
            seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: String,
    pub filtered_resampling: bool,
    pub regimen: Regimen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareSection {
    pub variants: Vec<VariantSpec>,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            variants: vec![
                VariantSpec {
                    name: "filtered".into(),
                    filtered_resampling: true,
                    regimen: Regimen::Bgc,
                },
                VariantSpec {
                    name: "unfiltered".into(),
                    filtered_resampling: false,
                    regimen: Regimen::Bgc,
                },
            ],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.model.validate()?;
        if self.grid.sample_sizes.is_empty()
            || self.grid.regimens.is_empty()
            || self.grid.transfer.is_empty()
            || self.grid.seeds.is_empty()
        {
            bail!("grid lists must be nonempty");
        }
        let eval_images = self.training.eval_every_ticks * self.training.train.tick_images;
        if self.training.budget_kimg * 1000 < eval_images {
            bail!(
                "budget_kimg {} is below one evaluation interval ({} images)",
                self.training.budget_kimg,
                eval_images
            );
        }
        if self.dataset.resolution != self.model.output_resolution {
            bail!(
                "dataset resolution {} != model output resolution {}",
                self.dataset.resolution,
                self.model.output_resolution
            );
        }
        if self.compare.variants.len() < 2 {
            bail!("compare needs at least 2 variants");
        }
        Ok(())
    }

    /// Stable short hash of the full configuration, for report keys and cell
    /// resumability.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hash_str(&json)
    }

    /// Hash of only the sections that determine a grid cell's outcome, so
    /// completed cells survive changes to the grid axes or plot settings.
    pub fn training_hash(&self) -> String {
        let relevant = serde_json::json!({
            "dataset": self.dataset,
            "model": self.model,
            "training": self.training,
            "metrics": self.metrics,
            "severity": self.severity,
        });
        hash_str(&relevant.to_string())
    }
}

pub fn hash_str(s: &str) -> String {
    let mut h = Sha256::new();
    h.update(s.as_bytes());
    let digest = h.finalize();
    let mut out = String::new();
    for b in &digest[..8] {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates_and_hashes_stably() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
    }

    #[test]
    fn toml_round_trip_preserves_config() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
[dataset]
n = 100

[augmentation]
regimen = "c"
"#,
        )
        .unwrap();
        assert_eq!(cfg.dataset.n, 100);
        assert_eq!(cfg.augmentation.regimen, Regimen::C);
        assert_eq!(cfg.training.budget_kimg, 30);
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.training.budget_kimg = 31;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn training_hash_ignores_grid_axes_but_tracks_training() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.grid.seeds = vec![9];
        assert_eq!(a.training_hash(), b.training_hash());
        let mut c = a.clone();
        c.training.budget_kimg = 31;
        assert_ne!(a.training_hash(), c.training_hash());
    }

    #[test]
    fn budget_below_eval_interval_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.training.budget_kimg = 10;
        cfg.training.eval_every_ticks = 40;
        assert!(cfg.validate().is_err());
    }
}
