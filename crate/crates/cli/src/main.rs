use anyhow::Context;
use clap::{Parser, Subcommand};
use facegen_cli::config::ExperimentConfig;
use facegen_cli::report::{write_train_log, TrainLogRow};
use facegen_cli::runner;
use facegen_core::face_prep::{prep_dataset, PrepConfig};
use facegen_core::gan::{finetune, generate_batch, pretrain, Checkpoint};
use facegen_core::synthetic::{make_synthetic_dataset, SyntheticFaceSpec};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "facegen", about = "Small-data face synthesis experiments", version)]
struct Cli {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic face dataset (PNGs, landmarks, manifest).
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 514)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        #[arg(long, default_value_t = 0.5)]
        cleft_fraction: f64,
    },
    /// Align and background-blur raw images listed in a prep manifest.
    Prep {
        /// Tab-separated `image<TAB>landmarks` manifest.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        /// Fraction of the output area covered by the preserved face region.
        #[arg(long, default_value_t = 0.6)]
        face_area: f64,
        /// Target interocular distance as a fraction of the output side.
        #[arg(long, default_value_t = 100.0 / 1024.0)]
        interocular_frac: f64,
        /// Background blur strength in output pixels.
        #[arg(long, default_value_t = 8.0)]
        blur_sigma: f64,
    },
    /// Train from scratch on the source population and save a checkpoint.
    Pretrain {
        #[arg(long)]
        out: PathBuf,
        /// Override the configured augmentation regimen (none|c|bg|bgc).
        #[arg(long)]
        aug: Option<String>,
    },
    /// Transfer-train from a source checkpoint on the target population.
    Finetune {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured augmentation regimen (none|c|bg|bgc).
        #[arg(long)]
        aug: Option<String>,
    },
    /// Sample images from a checkpoint into a tiled grid.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Grid side length; n*n images are sampled.
        #[arg(long, default_value_t = 5)]
        grid: usize,
    },
    /// Score a checkpoint with the metric suite.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Real-image directory overriding the configured dataset source.
        #[arg(long)]
        real: Option<PathBuf>,
        /// Restrict output to one metric (fid|ppl|dish); default reports all.
        #[arg(long)]
        metric: Option<String>,
    },
    /// Run the sample-size x regimen x transfer x seed grid.
    Grid {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and score each configured model-flag variant.
    Compare {
        #[arg(long)]
        out: PathBuf,
    },
    /// Render plots from a finished grid/compare run directory.
    Plot {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn apply_aug_override(cfg: &mut ExperimentConfig, aug: &Option<String>) -> anyhow::Result<()> {
    use facegen_core::augment::Regimen;
    if let Some(name) = aug {
        cfg.augmentation.regimen = match name.as_str() {
            "none" => Regimen::None,
            "c" => Regimen::C,
            "bg" => Regimen::Bg,
            "bgc" => Regimen::Bgc,
            other => anyhow::bail!("unknown augmentation regimen {other:?}"),
        };
    }
    Ok(())
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => {
            let cfg = ExperimentConfig::default();
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::SynthData { out, n, resolution, cleft_fraction } => {
            let spec = SyntheticFaceSpec { resolution, cleft_fraction, ..Default::default() };
            let manifest = make_synthetic_dataset(&spec, n, cli.seed, &out)?;
            println!("wrote {} faces to {}", manifest.n, out.display());
        }
        Command::Prep { manifest, out, resolution, face_area, interocular_frac, blur_sigma } => {
            let config = PrepConfig {
                output_resolution: resolution,
                face_area_frac: face_area,
                interocular_target_frac: interocular_frac,
                background_blur_sigma: blur_sigma,
                ..Default::default()
            };
            let report = prep_dataset(&manifest, &out, &config)?;
            println!("prepared {} images ({} skipped)", report.processed, report.skipped);
            anyhow::ensure!(report.processed > 0, "no images were prepared");
        }
        Command::Pretrain { out, aug } => {
            let mut cfg = load_config(&cli.config)?;
            apply_aug_override(&mut cfg, &aug)?;
            let dataset = runner::pretrain_dataset(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let mut log = Vec::new();
            let mut trainer = pretrain(
                &cfg.model,
                cfg.training.train.clone(),
                cfg.augmentation.to_config(),
                &dataset,
                cfg.training.pretrain_kimg,
                cli.seed,
                Some(&out),
                |_, ev| {
                    log.push(TrainLogRow {
                        tick: ev.tick_index,
                        images_seen: ev.images_seen,
                        d_loss: ev.d_loss,
                        g_loss: ev.g_loss,
                        ada_p: ev.ada_p,
                        fid: f64::NAN,
                    });
                    Ok(())
                },
            )?;
            let ckpt_path = out.join("pretrain.ckpt");
            Checkpoint::from_trainer(&mut trainer).save(&ckpt_path)?;
            write_train_log(&out.join("pretrain_log.csv"), &log)?;
            println!("saved {}", ckpt_path.display());
        }
        Command::Finetune { source, out, aug } => {
            let mut cfg = load_config(&cli.config)?;
            apply_aug_override(&mut cfg, &aug)?;
            let dataset = runner::target_dataset(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let ckpt = Checkpoint::load(&source)?;
            let mut trainer = finetune(
                &ckpt,
                cfg.augmentation.to_config(),
                &dataset,
                cfg.training.budget_kimg,
                cli.seed,
                Some(&out),
                |_, _| Ok(()),
            )?;
            let ckpt_path = out.join("finetuned.ckpt");
            Checkpoint::from_trainer(&mut trainer).save(&ckpt_path)?;
            println!("saved {}", ckpt_path.display());
        }
        Command::Generate { ckpt, out, grid } => {
            std::fs::create_dir_all(&out)?;
            let mut gen = Checkpoint::load(&ckpt)?.generator()?;
            let batch = generate_batch(&mut gen, grid * grid, cli.seed)?;
            let grid_path = out.join("samples.png");
            facegen_cli::plot::save_sample_grid(&batch.images, grid, &grid_path)?;
            let latents: Vec<(Vec<f64>, u64)> = batch
                .latents
                .iter()
                .zip(&batch.noise_seeds)
                .map(|(z, &s)| (z.to_vec(), s))
                .collect();
            std::fs::write(out.join("latents.json"), serde_json::to_string_pretty(&latents)?)
                .context("writing latent log")?;
            println!("wrote {}", grid_path.display());
        }
        Command::Eval { ckpt, out, real, metric } => {
            let mut cfg = load_config(&cli.config)?;
            if let Some(dir) = real {
                let n = std::fs::read_dir(&dir)
                    .with_context(|| format!("reading {}", dir.display()))?
                    .filter_map(|e| e.ok())
                    .filter(|e| e.path().extension().map(|x| x == "png").unwrap_or(false))
                    .count();
                anyhow::ensure!(n > 0, "no PNGs in {}", dir.display());
                cfg.dataset.source = dir.display().to_string();
                cfg.dataset.n = n;
            }
            let rows = runner::evaluate_checkpoint(&cfg, &ckpt, &out, cli.seed)?;
            let rows: Vec<_> = match &metric {
                Some(m) => {
                    let filtered: Vec<_> = rows.into_iter().filter(|r| &r.metric == m).collect();
                    anyhow::ensure!(!filtered.is_empty(), "unknown metric {m}");
                    filtered
                }
                None => rows,
            };
            for r in &rows {
                println!("{} = {:.6} (stderr {:.6}, n {})", r.metric, r.value, r.stderr, r.n);
            }
        }
        Command::Grid { out } => {
            let cfg = load_config(&cli.config)?;
            let rows = runner::run_grid(&cfg, &out)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!("grid finished: {} cells, {failed} failed", rows.len());
            anyhow::ensure!(failed == 0, "{failed} grid cells failed");
        }
        Command::Compare { out } => {
            let cfg = load_config(&cli.config)?;
            let rows = runner::compare_variants(&cfg, &out)?;
            for r in &rows {
                println!(
                    "{}: fid {:.4} ppl {:.4} dish {:.4}",
                    r.variant, r.fid, r.ppl, r.dish
                );
            }
        }
        Command::Plot { run, out } => {
            let n = runner::plot_outputs(&run, &out)?;
            println!("wrote {n} plots to {}", out.display());
        }
    }
    Ok(())
}
