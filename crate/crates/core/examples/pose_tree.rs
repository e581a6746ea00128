//! Quantizes sampled poses into classes with k-means and builds the
//! coarse-to-fine class hierarchy.
//!
//! `cargo run --release --example pose_tree -- 12 3`

use handcascade::cascade::sample_labels;
use handcascade::detect::ScanConfig;
use handcascade::pose_tree::{build_hierarchy, kmeans_quantize};
use handcascade::synth::{generate_dataset, Dataset, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let classes = args.next().flatten().unwrap_or(12);
    let levels = args.next().flatten().unwrap_or(3);

    let dir = std::env::temp_dir().join("handcascade_pose_tree");
    std::fs::create_dir_all(&dir)?;
    generate_dataset(
        &SynthConfig {
            count: 200,
            seed: 11,
            ..SynthConfig::default()
        },
        &dir,
    )?;
    let data = Dataset::load(&dir)?;
    let labels = sample_labels(&data, &ScanConfig::default())?;

    let q = kmeans_quantize(&labels, classes, 7, 100)?;
    println!(
        "k-means objective {:.1} -> {:.1} over {} steps",
        q.objective[0],
        q.objective[q.objective.len() - 1],
        q.objective.len()
    );
    for c in &q.classes {
        println!("class {:2}: {:3} samples", c.id, c.members.len());
    }

    let tree = build_hierarchy(&q.classes, levels)?;
    println!("{} nodes over {} levels", tree.len(), tree.levels());
    for node in &tree.nodes {
        let indent = "  ".repeat(node.depth);
        println!("{indent}node {} classes {:?}", node.id, node.classes);
    }
    Ok(())
}
