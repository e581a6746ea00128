//! Generates a small synthetic dataset and summarises its manifest.
//!
//! `cargo run --release --example synth_dataset -- out_dir 50`

use handcascade::synth::{generate_dataset, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "synth_out".into());
    let count = args.next().and_then(|c| c.parse().ok()).unwrap_or(50);
    std::fs::create_dir_all(&dir)?;
    let cfg = SynthConfig {
        count,
        seed: 1,
        ..SynthConfig::default()
    };
    let manifest = generate_dataset(&cfg, &dir)?;

    println!("{} samples in {dir}", manifest.samples.len());
    let with_object = manifest.samples.iter().filter(|s| s.has_object).count();
    println!("{with_object} hold an object");
    for s in manifest.samples.iter().take(5) {
        let visible = s.scored_visibility().iter().filter(|&&v| v).count();
        println!(
            "#{:3} {}: box {:.0}x{:.0} at ({:.0}, {:.0}), {visible} scored keypoints visible",
            s.id, s.depth_file, s.bbox.w, s.bbox.h, s.bbox.x, s.bbox.y
        );
    }
    Ok(())
}
