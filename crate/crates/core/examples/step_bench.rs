use facegen_core::augment::{AugmentationConfig, Regimen};
use facegen_core::gan::{ModelConfig, TrainConfig, Trainer};
use facegen_core::synthetic::{generate_faces, SyntheticFaceSpec};
use std::time::Instant;

fn main() {
    let spec = SyntheticFaceSpec { resolution: 32, cleft_fraction: 0.5, ..Default::default() };
    let faces: Vec<_> =
        generate_faces(&spec, 10, 1).into_iter().map(|(im, _, _)| im.to_signed()).collect();
    let mut t = Trainer::new(
        &ModelConfig::default(),
        TrainConfig::default(),
        AugmentationConfig::with_regimen(Regimen::Bgc),
        1,
    )
    .unwrap();
    // Warm up.
    t.train_step(&faces).unwrap();
    let start = Instant::now();
    let n = 20;
    for _ in 0..n {
        t.train_step(&faces).unwrap();
    }
    let dt = start.elapsed().as_secs_f64() / n as f64;
    println!("{:.4} s/step, {:.1} s/kimg, 30 kimg ≈ {:.1} min", dt, dt * 100.0, dt * 100.0 * 30.0 / 60.0);
}
