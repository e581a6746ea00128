//! Computes the HOG-on-depth descriptor of a synthetic hand window and of a
//! shifted window, and compares them.
//!
//! `cargo run --example hogd_features`

use handcascade::cascade::hand_window;
use handcascade::detect::{median_filter, ScanConfig};
use handcascade::features::{extract, FeatureConfig};
use handcascade::geometry::BoundingBox;
use handcascade::synth::{generate_dataset, Dataset, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("handcascade_hogd");
    std::fs::create_dir_all(&dir)?;
    generate_dataset(
        &SynthConfig {
            count: 1,
            seed: 5,
            ..SynthConfig::default()
        },
        &dir,
    )?;
    let data = Dataset::load(&dir)?;
    let sample = &data.manifest.samples[0];
    let frame = data.read_frame(&sample.depth_file)?;

    let cfg = FeatureConfig::default();
    let scan = ScanConfig::default();
    let filtered = median_filter(&frame, scan.median_radius);
    let (cx, cy) = (sample.bbox.x + sample.bbox.w / 2.0, sample.bbox.y + sample.bbox.h / 2.0);
    let mean_depth = sample.keypoints_3d.iter().map(|p| p[2]).sum::<f64>() / sample.keypoints_3d.len() as f64;
    let (window, depth) = hand_window(&filtered, cx, cy, &data.manifest.camera, &scan, mean_depth);
    let grid = extract(&filtered, &window, depth, &cfg)?;
    println!(
        "window {:.0}px at depth {depth:.0} mm: {}x{} cells, {} bins, {} values",
        window.w,
        grid.cells_x,
        grid.cells_y,
        grid.bins,
        grid.values.len()
    );

    let shifted = BoundingBox {
        x: window.x + window.w / 2.0,
        ..window
    };
    let other = extract(&filtered, &shifted, depth, &cfg)?;
    let dot: f64 = grid.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    println!(
        "cosine to a half-window shift: {:.3}",
        dot / (norm(&grid.values) * norm(&other.values))
    );
    Ok(())
}
