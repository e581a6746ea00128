//! Scores detections against ground truth. Uses the ground-truth keypoints
//! perturbed by a fixed offset as a stand-in detector, and prints the
//! metrics table as CSV.
//!
//! `cargo run --example evaluate -- 4.0`

use handcascade::detect::Candidate;
use handcascade::eval::{evaluate, EvalConfig, FrameDetections, GroundTruth};
use handcascade::synth::{generate_dataset, Dataset, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let offset: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(4.0);
    let dir = std::env::temp_dir().join("handcascade_evaluate");
    std::fs::create_dir_all(&dir)?;
    generate_dataset(
        &SynthConfig {
            count: 20,
            seed: 3,
            ..SynthConfig::default()
        },
        &dir,
    )?;
    let data = Dataset::load(&dir)?;

    let truth: Vec<GroundTruth> = data.manifest.samples.iter().map(GroundTruth::from_sample).collect();
    let detections: Vec<FrameDetections> = truth
        .iter()
        .map(|t| {
            let mut bbox = t.bbox;
            bbox.x += offset;
            FrameDetections {
                frame: t.frame,
                candidates: vec![Candidate {
                    bbox: bbox.clip(320, 240),
                    window: bbox,
                    class: 0,
                    votes: 1,
                    margin: 0.0,
                    keypoints: t.keypoints.iter().map(|p| [p[0] + offset, p[1]]).collect(),
                }],
            }
        })
        .collect();

    let table = evaluate(&truth, &detections, &EvalConfig::default())?;
    print!("{}", table.to_csv());
    Ok(())
}
