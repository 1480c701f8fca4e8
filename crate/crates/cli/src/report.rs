//! CSV artifacts: per-run training logs, metric reports, and the grid report.
//! Floats are written with Rust's shortest round-trip formatting so identical
//! runs produce byte-identical files.

use anyhow::Context;
use facegen_core::augment::Regimen;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One evaluation point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub tick: u64,
    pub images_seen: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub ada_p: f64,
    pub fid: f64,
}

pub fn write_train_log(path: &Path, rows: &[TrainLogRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing training log {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_train_log(path: &Path) -> anyhow::Result<Vec<TrainLogRow>> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("reading training log {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// One row of the `eval` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
    pub config_hash: String,
}

pub fn write_metric_rows(path: &Path, rows: &[MetricRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing metric report {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// One grid cell outcome. `status` is `ok` or an error summary; metric fields
/// are meaningful only for `ok` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub sample_size: usize,
    pub regimen: Regimen,
    pub transfer: bool,
    pub seed: u64,
    pub best_fid: f64,
    pub best_tick: u64,
    pub final_ppl: f64,
    pub final_dish: f64,
    pub status: String,
}

pub fn write_grid_report(path: &Path, rows: &[GridRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing grid report {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid_report(path: &Path) -> anyhow::Result<Vec<GridRow>> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("reading grid report {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Comparison table row (one per model-flag variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub variant: String,
    pub fid: f64,
    pub ppl: f64,
    pub dish: f64,
}

pub fn write_compare_report(path: &Path, rows: &[CompareRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing comparison report {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_log_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let rows = vec![
            TrainLogRow { tick: 5, images_seen: 5000, d_loss: 1.25, g_loss: 0.75, ada_p: 0.1, fid: 42.5 },
            TrainLogRow { tick: 10, images_seen: 10000, d_loss: 1.0, g_loss: 0.5, ada_p: 0.2, fid: 30.25 },
        ];
        write_train_log(&path, &rows).unwrap();
        assert_eq!(read_train_log(&path).unwrap(), rows);
    }

    #[test]
    fn identical_rows_write_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let rows = vec![GridRow {
            sample_size: 514,
            regimen: Regimen::Bgc,
            transfer: true,
            seed: 1,
            best_fid: 12.345678901234567,
            best_tick: 20,
            final_ppl: 0.125,
            final_dish: 0.0625,
            status: "ok".into(),
        }];
        write_grid_report(&a, &rows).unwrap();
        write_grid_report(&b, &rows).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(read_grid_report(&a).unwrap(), rows);
    }

    #[test]
    fn metric_rows_have_documented_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metric_rows(
            &path,
            &[MetricRow {
                metric: "fid".into(),
                value: 1.5,
                stderr: 0.0,
                n: 100,
                seed: 3,
                config_hash: "abc".into(),
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("metric,value,stderr,n,seed,config_hash\n"));
    }
}
