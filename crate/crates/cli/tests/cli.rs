//! End-to-end runs of the `facegen` binary.

use std::path::Path;
use std::process::{Command, Output};

fn facegen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facegen"))
        .args(args)
        .output()
        .expect("spawning facegen")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const TINY_CONFIG: &str = r#"
[dataset]
resolution = 8
n = 60
pretrain_n = 60
seed = 5

[model]
latent_dim = 8
w_dim = 8
output_resolution = 8

[model.channels_per_resolution]
4 = 8
8 = 4

[training]
batch_size = 4
tick_images = 40
budget_kimg = 1
pretrain_kimg = 1
eval_every_ticks = 10

[metrics]
ppl_paths = 5
dish_bins = 10

[grid]
sample_sizes = [60]
regimens = ["none"]
transfer = [false]
seeds = [1]
"#;

fn write_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path.display().to_string()
}

#[test]
fn synth_data_then_prep() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    let out = facegen(&[
        "synth-data",
        "--out",
        raw.to_str().unwrap(),
        "--n",
        "6",
        "--resolution",
        "128",
        "--seed",
        "3",
    ]);
    assert!(ok(&out).contains("6 faces"));
    let prepped = dir.path().join("prepped");
    let out = facegen(&[
        "prep",
        "--manifest",
        raw.join("manifest.txt").to_str().unwrap(),
        "--out",
        prepped.to_str().unwrap(),
        "--resolution",
        "64",
    ]);
    assert!(ok(&out).contains("prepared 6 images"));
    assert!(prepped.join("manifest.json").exists());
}

#[test]
fn synth_data_regenerates_identically_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&facegen(&["synth-data", "--out", d.to_str().unwrap(), "--n", "3", "--seed", "9"]));
    }
    assert_eq!(
        std::fs::read(a.join("face_00001.png")).unwrap(),
        std::fs::read(b.join("face_00001.png")).unwrap()
    );
}

#[test]
fn pretrain_generate_eval_chain() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let train_dir = dir.path().join("train");
    ok(&facegen(&[
        "--config",
        &config,
        "--seed",
        "2",
        "pretrain",
        "--out",
        train_dir.to_str().unwrap(),
        "--aug",
        "bgc",
    ]));
    let ckpt = train_dir.join("pretrain.ckpt");
    assert!(ckpt.exists());
    assert!(train_dir.join("pretrain_log.csv").exists());

    let gen_dir = dir.path().join("gen");
    ok(&facegen(&[
        "generate",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--out",
        gen_dir.to_str().unwrap(),
        "--grid",
        "2",
    ]));
    assert!(gen_dir.join("samples.png").exists());
    assert!(gen_dir.join("latents.json").exists());

    let ft_dir = dir.path().join("ft");
    ok(&facegen(&[
        "--config",
        &config,
        "finetune",
        "--source",
        ckpt.to_str().unwrap(),
        "--out",
        ft_dir.to_str().unwrap(),
    ]));
    assert!(ft_dir.join("finetuned.ckpt").exists());

    let eval_dir = dir.path().join("eval");
    let stdout = ok(&facegen(&[
        "--config",
        &config,
        "eval",
        "--ckpt",
        ft_dir.join("finetuned.ckpt").to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]));
    for metric in ["fid", "ppl", "dish"] {
        assert!(stdout.contains(metric), "missing {metric} in:\n{stdout}");
    }
    assert!(eval_dir.join("metrics.csv").exists());
}

#[test]
fn grid_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let run_dir = dir.path().join("run");
    let stdout = ok(&facegen(&["--config", &config, "grid", "--out", run_dir.to_str().unwrap()]));
    assert!(stdout.contains("1 cells, 0 failed"), "{stdout}");
    assert!(run_dir.join("grid_report.csv").exists());

    let plots = dir.path().join("plots");
    let stdout = ok(&facegen(&["plot", "--run", run_dir.to_str().unwrap(), "--out", plots.to_str().unwrap()]));
    assert!(stdout.contains("plots"), "{stdout}");
    assert!(plots.join("fid_curve.png").exists());
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    // Empty run directory: nothing to plot.
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = facegen(&["plot", "--run", empty.to_str().unwrap(), "--out", dir.path().join("p").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no plottable"));
    // Unknown augmentation regimen.
    let out = facegen(&["pretrain", "--out", dir.path().join("t").to_str().unwrap(), "--aug", "zzz"]);
    assert!(!out.status.success());
    // Missing checkpoint.
    let out = facegen(&["generate", "--ckpt", "/nonexistent.ckpt", "--out", dir.path().join("g").to_str().unwrap()]);
    assert!(!out.status.success());
}
