//! Experiment harness: dataset assembly, cached embedder/pretraining
//! artifacts, checkpoint evaluation, the sample-size x regimen grid, and the
//! model-flag comparison. Every run is keyed by a config hash so interrupted
//! grids resume per cell.

use crate::config::{hash_str, ExperimentConfig};
use crate::plot::{plot_curves, plot_severity_overlay, save_sample_grid, CurveSeries};
use crate::report::{
    read_train_log, write_compare_report, write_grid_report, write_metric_rows, write_train_log,
    CompareRow, GridRow, MetricRow, TrainLogRow,
};
use anyhow::{ensure, Context};
use facegen_core::augment::{AugmentationConfig, Regimen};
use facegen_core::embedder::DeskEmbedder;
use facegen_core::error::Result as CoreResult;
use facegen_core::gan::{
    finetune, generate_batch, pretrain, Checkpoint, Generator, GeneratorPaths, ModelConfig,
    TickEvent, Trainer,
};
use facegen_core::img::Image;
use facegen_core::metrics::{
    compute_moments, dish, fid, ppl, DishResult, Embedder, FeatureMoments, PerceptualDistance,
    PplConfig, PplEstimate, SeverityHistogram,
};
use facegen_core::severity::{calibrate, scorer_by_name, SeverityScorer};
use facegen_core::synthetic::{generate_faces, load_dataset_images, SyntheticFaceSpec};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub fn regimen_name(r: Regimen) -> &'static str {
    match r {
        Regimen::None => "none",
        Regimen::C => "c",
        Regimen::Bg => "bg",
        Regimen::Bgc => "bgc",
    }
}

fn face_spec(cfg: &ExperimentConfig, cleft_fraction: f64) -> SyntheticFaceSpec {
    SyntheticFaceSpec {
        resolution: cfg.dataset.resolution,
        cleft_fraction,
        ..Default::default()
    }
}

/// Target-population images in [-1, 1]: either freshly synthesized or loaded
/// from a prepared directory.
pub fn target_dataset(cfg: &ExperimentConfig) -> anyhow::Result<Vec<Image>> {
    if cfg.dataset.source == "synthetic" {
        let spec = face_spec(cfg, cfg.dataset.cleft_fraction);
        Ok(generate_faces(&spec, cfg.dataset.n, cfg.dataset.seed)
            .into_iter()
            .map(|(im, _, _)| im.to_signed())
            .collect())
    } else {
        let dir = PathBuf::from(&cfg.dataset.source);
        let images = load_dataset_images(&dir)
            .with_context(|| format!("loading dataset from {}", dir.display()))?;
        ensure!(
            images.len() >= cfg.dataset.n,
            "dataset {} has {} images, config wants {}",
            dir.display(),
            images.len(),
            cfg.dataset.n
        );
        for im in &images {
            ensure!(
                im.height() == cfg.dataset.resolution && im.width() == cfg.dataset.resolution,
                "dataset image resolution {}x{} != configured {}",
                im.height(),
                im.width(),
                cfg.dataset.resolution
            );
        }
        Ok(images[..cfg.dataset.n].iter().map(|im| im.to_signed()).collect())
    }
}

/// Source-domain population for pretraining: same renderer, no deformity.
pub fn pretrain_dataset(cfg: &ExperimentConfig) -> anyhow::Result<Vec<Image>> {
    let spec = face_spec(cfg, 0.0);
    Ok(generate_faces(&spec, cfg.dataset.pretrain_n, cfg.dataset.seed.wrapping_add(1))
        .into_iter()
        .map(|(im, _, _)| im.to_signed())
        .collect())
}

/// Train the frozen feature embedder once per (resolution, seed) and cache it
/// on disk; later calls load the cached parameters.
pub fn load_or_train_embedder(
    cache_dir: &Path,
    resolution: usize,
    seed: u64,
) -> anyhow::Result<DeskEmbedder> {
    std::fs::create_dir_all(cache_dir)
        .with_context(|| format!("creating {}", cache_dir.display()))?;
    let path = cache_dir.join(format!("embedder-r{resolution}-s{seed}.bin"));
    if path.exists() {
        if let Ok(e) = DeskEmbedder::load(&path) {
            return Ok(e);
        }
    }
    let (embedder, report) = DeskEmbedder::train(resolution, seed)?;
    ensure!(
        report.final_accuracy > 0.5,
        "embedder training failed to converge (accuracy {})",
        report.final_accuracy
    );
    embedder.save(&path)?;
    Ok(embedder)
}

/// Frozen evaluation assets for one real image set: embedded moments for FID,
/// a calibrated severity scorer, and metric settings.
pub struct EvalContext<'a> {
    pub embedder: &'a DeskEmbedder,
    pub reals: Vec<Image>,
    reals_unit: Vec<Image>,
    pub real_moments: FeatureMoments,
    pub scorer: Box<dyn SeverityScorer>,
    metrics: crate::config::MetricsSection,
}

impl<'a> EvalContext<'a> {
    pub fn new(
        cfg: &ExperimentConfig,
        embedder: &'a DeskEmbedder,
        reals: Vec<Image>,
    ) -> anyhow::Result<EvalContext<'a>> {
        let reals_unit: Vec<Image> = reals.iter().map(|im| im.to_unit()).collect();
        let proxy = calibrate(&cfg.severity.proxy, &reals_unit)
            .context("calibrating severity scorer on the real set")?;
        let scorer = scorer_by_name(&cfg.severity.scorer, &proxy)?;
        let real_moments = moments_of(embedder, &reals)?;
        Ok(EvalContext {
            embedder,
            reals,
            reals_unit,
            real_moments,
            scorer,
            metrics: cfg.metrics.clone(),
        })
    }

    pub fn fid_of(&self, gen: &mut Generator, seed: u64) -> CoreResult<f64> {
        let n = if self.metrics.fid_n == 0 { self.reals.len() } else { self.metrics.fid_n };
        let batch = generate_batch(gen, n, seed)?;
        let fake = moments_of(self.embedder, &batch.images)?;
        fid(&self.real_moments, &fake)
    }

    pub fn ppl_of(&self, gen: &mut Generator, seed: u64) -> CoreResult<PplEstimate> {
        let cfg = PplConfig {
            n_paths: self.metrics.ppl_paths,
            interpolation: self.metrics.ppl_interpolation,
            ..Default::default()
        };
        let paths = GeneratorPaths::new(gen, seed.rotate_left(32));
        ppl(&paths, |a, b| self.embedder.dist(a, b), &cfg, seed)
    }

    pub fn dish_of(&self, gen: &mut Generator, seed: u64) -> CoreResult<DishResult> {
        let n = if self.metrics.dish_n == 0 { self.reals.len() } else { self.metrics.dish_n };
        let batch = generate_batch(gen, n, seed)?;
        dish(
            &self.reals_unit,
            |i| Ok(batch.images[i].to_unit()),
            self.scorer.as_ref(),
            n,
            self.metrics.dish_bins,
        )
    }
}

fn moments_of(embedder: &dyn Embedder, images: &[Image]) -> CoreResult<FeatureMoments> {
    let mut feats = Array2::zeros((images.len(), embedder.dim()));
    for (i, im) in images.iter().enumerate() {
        feats.row_mut(i).assign(&embedder.embed(im));
    }
    compute_moments(feats.view())
}

/// Deterministic per-evaluation seed, independent of the training streams.
fn eval_seed(seed: u64, tag: u64) -> u64 {
    let mut x = seed ^ 0x6576c5 ^ tag.wrapping_mul(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x ^ (x >> 31)
}

const EVAL_TAG_PPL: u64 = 1_000_003;
const EVAL_TAG_DISH: u64 = 1_000_007;

/// Pretrain on the source population once per run directory and reuse the
/// checkpoint afterwards.
pub fn pretrain_checkpoint(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<Checkpoint> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("pretrain.ckpt");
    if path.exists() {
        return Ok(Checkpoint::load(&path)?);
    }
    let source_set = pretrain_dataset(cfg)?;
    let mut trainer = pretrain(
        &cfg.model,
        cfg.training.train.clone(),
        cfg.augmentation.to_config(),
        &source_set,
        cfg.training.pretrain_kimg,
        cfg.dataset.seed ^ 0x7072,
        None,
        |_, _| Ok(()),
    )?;
    let ckpt = Checkpoint::from_trainer(&mut trainer);
    ckpt.save(&path)?;
    Ok(ckpt)
}

/// Serializable histogram pair backing the severity-overlay plot; exactly the
/// histograms that produced the reported divergence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistJson {
    pub bin_edges: Vec<f64>,
    pub weights: Vec<f64>,
    pub n_samples: usize,
}

impl HistJson {
    fn of(h: &SeverityHistogram) -> HistJson {
        HistJson {
            bin_edges: h.bin_edges.clone(),
            weights: h.weights.clone(),
            n_samples: h.n_samples,
        }
    }

    pub fn to_hist(&self) -> SeverityHistogram {
        SeverityHistogram {
            bin_edges: self.bin_edges.clone(),
            weights: self.weights.clone(),
            n_samples: self.n_samples,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DishJson {
    pub js: f64,
    pub scorer_failures: usize,
    pub real: HistJson,
    pub fake: HistJson,
}

fn write_dish_json(path: &Path, r: &DishResult) -> anyhow::Result<()> {
    let d = DishJson {
        js: r.js,
        scorer_failures: r.scorer_failures,
        real: HistJson::of(&r.real_hist),
        fake: HistJson::of(&r.fake_hist),
    };
    std::fs::write(path, serde_json::to_string_pretty(&d)?)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn read_dish_json(path: &Path) -> anyhow::Result<DishJson> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

pub struct TrainOutcome {
    pub best_fid: f64,
    pub best_tick: u64,
    pub final_ppl: f64,
    pub final_dish: f64,
}

/// Train one run (from scratch or from a source checkpoint), evaluating FID
/// every `eval_every_ticks`. Writes `train_log.csv`, the best-FID checkpoint
/// as `best.ckpt`, and `dish.json` for the best generator into `dir`.
fn train_and_eval(
    cfg: &ExperimentConfig,
    model: &ModelConfig,
    regimen: Regimen,
    data: &[Image],
    source: Option<&Checkpoint>,
    seed: u64,
    ctx: &EvalContext,
    dir: &Path,
) -> anyhow::Result<TrainOutcome> {
    std::fs::create_dir_all(dir)?;
    let aug = AugmentationConfig::with_regimen(regimen);
    let eval_every = cfg.training.eval_every_ticks;
    let best_path = dir.join("best.ckpt");
    let mut rows: Vec<TrainLogRow> = Vec::new();
    let mut best = (f64::INFINITY, 0u64);
    {
        let on_tick = |t: &mut Trainer, ev: TickEvent| -> CoreResult<()> {
            if ev.tick_index % eval_every != 0 {
                return Ok(());
            }
            let fid = ctx.fid_of(&mut t.gen, eval_seed(seed, ev.tick_index))?;
            rows.push(TrainLogRow {
                tick: ev.tick_index,
                images_seen: ev.images_seen,
                d_loss: ev.d_loss,
                g_loss: ev.g_loss,
                ada_p: ev.ada_p,
                fid,
            });
            if fid < best.0 {
                best = (fid, ev.tick_index);
                Checkpoint::from_trainer(t).save(&best_path)?;
            }
            Ok(())
        };
        match source {
            Some(ckpt) => {
                finetune(ckpt, aug, data, cfg.training.budget_kimg, seed, Some(dir), on_tick)?
            }
            None => pretrain(
                model,
                cfg.training.train.clone(),
                aug,
                data,
                cfg.training.budget_kimg,
                seed,
                Some(dir),
                on_tick,
            )?,
        };
    }
    ensure!(!rows.is_empty(), "training budget produced no evaluation points");
    write_train_log(&dir.join("train_log.csv"), &rows)?;
    let mut gen = Checkpoint::load(&best_path)?.generator()?;
    let ppl_est = ctx.ppl_of(&mut gen, eval_seed(seed, EVAL_TAG_PPL))?;
    let dish_res = ctx.dish_of(&mut gen, eval_seed(seed, EVAL_TAG_DISH))?;
    write_dish_json(&dir.join("dish.json"), &dish_res)?;
    Ok(TrainOutcome {
        best_fid: best.0,
        best_tick: best.1,
        final_ppl: ppl_est.mean,
        final_dish: dish_res.js,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CellSpec {
    pub sample_size: usize,
    pub regimen: Regimen,
    pub transfer: bool,
    pub seed: u64,
}

impl CellSpec {
    pub fn name(&self) -> String {
        format!(
            "s{:04}-{}-{}-seed{}",
            self.sample_size,
            regimen_name(self.regimen),
            if self.transfer { "tl" } else { "scratch" },
            self.seed
        )
    }

    fn hash(&self, config_hash: &str) -> String {
        hash_str(&format!(
            "{config_hash}/{}/{}/{}/{}",
            self.sample_size,
            regimen_name(self.regimen),
            self.transfer,
            self.seed
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct CellDone {
    hash: String,
    row: GridRow,
}

/// Run every grid cell, resuming completed cells via their `cell.json`
/// markers, and write `grid_report.csv`. Individual cell failures are
/// recorded in their row's status without aborting the grid.
pub fn run_grid(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<Vec<GridRow>> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let config_hash = cfg.training_hash();
    let target = target_dataset(cfg)?;
    let max_size = *cfg.grid.sample_sizes.iter().max().unwrap();
    ensure!(
        max_size <= target.len(),
        "grid sample size {max_size} exceeds dataset size {}",
        target.len()
    );
    let embedder =
        load_or_train_embedder(out_dir, cfg.dataset.resolution, cfg.metrics.embedder_seed)?;
    let source = if cfg.grid.transfer.contains(&true) {
        Some(pretrain_checkpoint(cfg, out_dir)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for &size in &cfg.grid.sample_sizes {
        let subset = &target[..size];
        let ctx = EvalContext::new(cfg, &embedder, subset.to_vec())?;
        for &regimen in &cfg.grid.regimens {
            for &transfer in &cfg.grid.transfer {
                for &seed in &cfg.grid.seeds {
                    let cell = CellSpec { sample_size: size, regimen, transfer, seed };
                    let dir = out_dir.join("cells").join(cell.name());
                    let done_path = dir.join("cell.json");
                    let hash = cell.hash(&config_hash);
                    if let Some(row) = load_done(&done_path, &hash) {
                        rows.push(row);
                        continue;
                    }
                    let src = if transfer { source.as_ref() } else { None };
                    let row = match train_and_eval(
                        cfg, &cfg.model, regimen, subset, src, seed, &ctx, &dir,
                    ) {
                        Ok(out) => GridRow {
                            sample_size: size,
                            regimen,
                            transfer,
                            seed,
                            best_fid: out.best_fid,
                            best_tick: out.best_tick,
                            final_ppl: out.final_ppl,
                            final_dish: out.final_dish,
                            status: "ok".into(),
                        },
                        Err(e) => GridRow {
                            sample_size: size,
                            regimen,
                            transfer,
                            seed,
                            best_fid: 0.0,
                            best_tick: 0,
                            final_ppl: 0.0,
                            final_dish: 0.0,
                            status: format!("error: {e}"),
                        },
                    };
                    if row.status == "ok" {
                        let done = CellDone { hash: hash.clone(), row: row.clone() };
                        std::fs::write(&done_path, serde_json::to_string_pretty(&done)?)?;
                    }
                    rows.push(row);
                }
            }
        }
    }
    write_grid_report(&out_dir.join("grid_report.csv"), &rows)?;
    Ok(rows)
}

fn load_done(path: &Path, hash: &str) -> Option<GridRow> {
    let text = std::fs::read_to_string(path).ok()?;
    let done: CellDone = serde_json::from_str(&text).ok()?;
    (done.hash == hash).then_some(done.row)
}

/// Train and evaluate each configured model-flag variant from scratch on the
/// full target set and write `compare.csv`.
pub fn compare_variants(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<Vec<CompareRow>> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let target = target_dataset(cfg)?;
    let embedder =
        load_or_train_embedder(out_dir, cfg.dataset.resolution, cfg.metrics.embedder_seed)?;
    let ctx = EvalContext::new(cfg, &embedder, target.clone())?;
    let seed = cfg.grid.seeds[0];
    let mut rows = Vec::new();
    for variant in &cfg.compare.variants {
        let dir = out_dir.join("variants").join(&variant.name);
        let mut model = cfg.model.clone();
        model.filtered_resampling = variant.filtered_resampling;
        let out = train_and_eval(cfg, &model, variant.regimen, &target, None, seed, &ctx, &dir)
            .with_context(|| format!("variant {}", variant.name))?;
        rows.push(CompareRow {
            variant: variant.name.clone(),
            fid: out.best_fid,
            ppl: out.final_ppl,
            dish: out.final_dish,
        });
    }
    write_compare_report(&out_dir.join("compare.csv"), &rows)?;
    Ok(rows)
}

/// Evaluate a checkpoint's generator against the configured real set. Writes
/// `metrics.csv` and `dish.json` into `out_dir` and returns the rows.
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    ckpt_path: &Path,
    out_dir: &Path,
    seed: u64,
) -> anyhow::Result<Vec<MetricRow>> {
    std::fs::create_dir_all(out_dir)?;
    let target = target_dataset(cfg)?;
    let embedder =
        load_or_train_embedder(out_dir, cfg.dataset.resolution, cfg.metrics.embedder_seed)?;
    let ctx = EvalContext::new(cfg, &embedder, target)?;
    let mut gen = Checkpoint::load(ckpt_path)?.generator()?;
    let fid_v = ctx.fid_of(&mut gen, eval_seed(seed, 0))?;
    let ppl_est = ctx.ppl_of(&mut gen, eval_seed(seed, EVAL_TAG_PPL))?;
    let dish_res = ctx.dish_of(&mut gen, eval_seed(seed, EVAL_TAG_DISH))?;
    write_dish_json(&out_dir.join("dish.json"), &dish_res)?;
    let hash = cfg.hash();
    let fid_n = if cfg.metrics.fid_n == 0 { ctx.reals.len() } else { cfg.metrics.fid_n };
    let rows = vec![
        MetricRow {
            metric: "fid".into(),
            value: fid_v,
            stderr: 0.0,
            n: fid_n,
            seed,
            config_hash: hash.clone(),
        },
        MetricRow {
            metric: "ppl".into(),
            value: ppl_est.mean,
            stderr: ppl_est.stderr,
            n: ppl_est.n_paths,
            seed,
            config_hash: hash.clone(),
        },
        MetricRow {
            metric: "dish".into(),
            value: dish_res.js,
            stderr: 0.0,
            n: dish_res.fake_hist.n_samples,
            seed,
            config_hash: hash,
        },
    ];
    write_metric_rows(&out_dir.join("metrics.csv"), &rows)?;
    Ok(rows)
}

/// Render plots from a grid/compare run directory: one FID-vs-kimg chart over
/// all runs, plus per-run severity overlays and sample grids. Errors if the
/// directory has nothing to plot.
pub fn plot_outputs(run_dir: &Path, out_dir: &Path) -> anyhow::Result<usize> {
    ensure!(run_dir.is_dir(), "run directory {} does not exist", run_dir.display());
    std::fs::create_dir_all(out_dir)?;
    let mut run_subdirs: Vec<PathBuf> = Vec::new();
    for group in ["cells", "variants"] {
        let gd = run_dir.join(group);
        if let Ok(entries) = std::fs::read_dir(&gd) {
            run_subdirs.extend(entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()));
        }
    }
    if run_dir.join("train_log.csv").exists() || run_dir.join("dish.json").exists() {
        run_subdirs.push(run_dir.to_path_buf());
    }
    run_subdirs.sort();
    let mut count = 0usize;
    let mut series = Vec::new();
    for dir in &run_subdirs {
        let label = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if let Ok(rows) = read_train_log(&dir.join("train_log.csv")) {
            series.push(CurveSeries {
                label,
                points: rows.iter().map(|r| (r.images_seen as f64 / 1000.0, r.fid)).collect(),
            });
        }
    }
    if series.iter().any(|s| !s.points.is_empty()) {
        plot_curves(&series, "FID VS KIMG", "KIMG", "FID", &out_dir.join("fid_curve.png"))?;
        count += 1;
    }
    for dir in &run_subdirs {
        let label = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let dish_path = dir.join("dish.json");
        if dish_path.exists() {
            let d = read_dish_json(&dish_path)?;
            plot_severity_overlay(
                &d.real.to_hist(),
                &d.fake.to_hist(),
                &out_dir.join(format!("severity-{label}.png")),
            )?;
            count += 1;
        }
        let ckpt_path = dir.join("best.ckpt");
        if ckpt_path.exists() {
            let mut gen = Checkpoint::load(&ckpt_path)?.generator()?;
            let batch = generate_batch(&mut gen, 25, 0x706c6f74)?;
            save_sample_grid(&batch.images, 5, &out_dir.join(format!("samples-{label}.png")))?;
            count += 1;
        }
    }
    ensure!(count > 0, "no plottable artifacts under {}", run_dir.display());
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DatasetSection, GridSection, MetricsSection, TrainingSection};
    use facegen_core::gan::TrainConfig;
    use std::collections::BTreeMap;

    /// Small-everything config that keeps training runs to a few seconds.
    fn tiny_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset = DatasetSection {
            source: "synthetic".into(),
            resolution: 8,
            n: 60,
            cleft_fraction: 0.5,
            pretrain_n: 60,
            seed: 77,
        };
        cfg.model.latent_dim = 8;
        cfg.model.w_dim = 8;
        cfg.model.output_resolution = 8;
        cfg.model.channels_per_resolution = BTreeMap::from([(4, 8), (8, 4)]);
        cfg.training = TrainingSection {
            train: TrainConfig { batch_size: 4, tick_images: 40, ..Default::default() },
            budget_kimg: 1,
            pretrain_kimg: 1,
            eval_every_ticks: 10,
            transfer: false,
        };
        cfg.metrics = MetricsSection {
            ppl_paths: 5,
            dish_bins: 10,
            ..Default::default()
        };
        cfg.grid = GridSection {
            sample_sizes: vec![60],
            regimens: vec![Regimen::None],
            transfer: vec![false],
            seeds: vec![1, 2],
        };
        cfg.validate().unwrap();
        cfg
    }

    #[test]
    fn synthetic_datasets_are_deterministic_and_signed() {
        let cfg = tiny_cfg();
        let a = target_dataset(&cfg).unwrap();
        let b = target_dataset(&cfg).unwrap();
        assert_eq!(a.len(), 60);
        assert_eq!(a[0].data, b[0].data);
        let lo = a.iter().flat_map(|im| im.data.iter()).cloned().fold(f64::INFINITY, f64::min);
        assert!(lo < 0.0, "images should be in signed range, min {lo}");
        let pre = pretrain_dataset(&cfg).unwrap();
        assert_eq!(pre.len(), 60);
        assert_ne!(pre[0].data, a[0].data);
    }

    #[test]
    fn embedder_cache_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let a = load_or_train_embedder(dir.path(), 8, 3).unwrap();
        // Second call must hit the cache and embed identically.
        let b = load_or_train_embedder(dir.path(), 8, 3).unwrap();
        let img = target_dataset(&tiny_cfg()).unwrap().remove(0);
        assert_eq!(a.embed(&img), b.embed(&img));
        assert!(dir.path().join("embedder-r8-s3.bin").exists());
    }

    #[test]
    fn grid_runs_resume_and_reports_are_reproducible() {
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        let rows = run_grid(&cfg, dir.path()).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert_eq!(row.status, "ok");
            assert!(row.best_fid.is_finite() && row.best_fid >= 0.0);
            assert!(row.final_ppl.is_finite());
            assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&row.final_dish));
        }
        let report = std::fs::read(dir.path().join("grid_report.csv")).unwrap();
        // A second invocation resumes from cell markers and rewrites the same
        // bytes.
        let rows2 = run_grid(&cfg, dir.path()).unwrap();
        assert_eq!(rows, rows2);
        assert_eq!(report, std::fs::read(dir.path().join("grid_report.csv")).unwrap());
        // Artifacts exist per cell.
        let cell = dir.path().join("cells").join("s0060-none-scratch-seed1");
        assert!(cell.join("train_log.csv").exists());
        assert!(cell.join("best.ckpt").exists());
        assert!(cell.join("dish.json").exists());

        // The same directory plots without error.
        let plots = tempfile::tempdir().unwrap();
        let n = plot_outputs(dir.path(), plots.path()).unwrap();
        assert!(n >= 5, "expected curve + 2x(severity, samples), got {n}");
        assert!(plots.path().join("fid_curve.png").exists());

        // An empty run directory yields an error and no plots.
        let empty = tempfile::tempdir().unwrap();
        let plots2 = tempfile::tempdir().unwrap();
        assert!(plot_outputs(empty.path(), plots2.path()).is_err());
    }

    #[test]
    fn compare_writes_one_row_per_variant() {
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        let rows = compare_variants(&cfg, dir.path()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].variant, "filtered");
        assert_eq!(rows[1].variant, "unfiltered");
        for r in &rows {
            assert!(r.fid.is_finite() && r.ppl.is_finite() && r.dish.is_finite());
        }
        let text = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
        assert!(text.starts_with("variant,fid,ppl,dish\n"));
    }

    #[test]
    fn evaluate_checkpoint_reports_all_three_metrics() {
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        // An untrained checkpoint suffices for the reporting contract.
        let mut trainer = Trainer::new(
            &cfg.model,
            cfg.training.train.clone(),
            cfg.augmentation.to_config(),
            5,
        )
        .unwrap();
        let ckpt_path = dir.path().join("init.ckpt");
        Checkpoint::from_trainer(&mut trainer).save(&ckpt_path).unwrap();
        let rows = evaluate_checkpoint(&cfg, &ckpt_path, dir.path(), 9).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.metric.as_str()).collect();
        assert_eq!(names, ["fid", "ppl", "dish"]);
        assert!(rows.iter().all(|r| r.value.is_finite()));
        assert!(dir.path().join("metrics.csv").exists());
        assert!(dir.path().join("dish.json").exists());
    }
}
