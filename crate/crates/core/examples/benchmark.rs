//! Times the implicit ensemble against sampled explicit cascades, and sparse
//! against dense scanning, for a freshly trained model.
//!
//! `cargo run --release --example benchmark`

use handcascade::cascade::{train_model, TrainConfig};
use handcascade::cli::{run_bench, BenchConfig};
use handcascade::detect::ScanConfig;
use handcascade::synth::{generate_dataset, Dataset, SynthConfig};

fn dataset(name: &str, count: usize, seed: u64) -> Result<Dataset, Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("handcascade_benchmark").join(name);
    std::fs::create_dir_all(&dir)?;
    generate_dataset(
        &SynthConfig {
            count,
            seed,
            ..SynthConfig::default()
        },
        &dir,
    )?;
    Ok(Dataset::load(&dir)?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = dataset("train", 200, 1)?;
    let test = dataset("test", 5, 2)?;
    let cfg = TrainConfig {
        classes: 6,
        levels: 3,
        ..TrainConfig::default()
    };
    let model = train_model(&train, &ScanConfig::default(), &cfg)?.model;
    let frames = test
        .manifest
        .samples
        .iter()
        .map(|s| test.read_frame(&s.depth_file))
        .collect::<handcascade::Result<Vec<_>>>()?;
    let bench = BenchConfig {
        frames: 5,
        repetitions: 3,
        ..BenchConfig::default()
    };
    let report = run_bench(&model, &frames, &model.scan, &bench)?;
    print!("{}", report.summary());
    Ok(())
}
