//! Trains a small cascade model on synthetic data and runs sparse detection
//! on held-out frames.
//!
//! `cargo run --release --example train_and_detect`

use handcascade::cascade::{train_model, TrainConfig};
use handcascade::detect::{detect_top_n, ScanConfig, ScanMode};
use handcascade::synth::{generate_dataset, Dataset, SynthConfig};

fn dataset(name: &str, count: usize, seed: u64) -> Result<Dataset, Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("handcascade_train_and_detect").join(name);
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
    let train = dataset("train", 300, 1)?;
    let test = dataset("test", 5, 2)?;
    let cfg = TrainConfig {
        classes: 8,
        levels: 3,
        ..TrainConfig::default()
    };
    let trained = train_model(&train, &ScanConfig::default(), &cfg)?;
    let model = &trained.model;
    println!("trained {} nodes for {} classes", model.tree.len(), model.classes());
    for n in &trained.report.nodes {
        println!(
            "node {:2}: {:4} positives pass {:.3}, {:5} negatives pass {:.3}",
            n.node, n.positives, n.positive_pass_rate, n.negatives, n.negative_pass_rate
        );
    }

    for s in &test.manifest.samples {
        let frame = test.read_frame(&s.depth_file)?;
        let d = detect_top_n(&frame, model, &model.scan, ScanMode::Sparse)?;
        let best = d.candidates.first();
        println!(
            "frame {}: {} of {} locations classified, best {:?}, iou with truth {:.2}",
            s.id,
            d.locations,
            d.considered,
            best.map(|c| (c.class, c.votes)),
            best.map_or(0.0, |c| c.bbox.iou(&s.bbox))
        );
    }
    Ok(())
}
