//! Samples one valid egocentric hand pose, renders its depth image and
//! writes it as a 16-bit PGM.
//!
//! `cargo run --example render_hand -- out.pgm`

use handcascade::geometry::{render_depth, Background, HandShape, PinholeCamera};
use handcascade::synth::{default_grasps, rejection_sample, PerturbationConfig, Priors, ViewpointPrior};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "hand.pgm".into());
    let camera = PinholeCamera::default();
    let shape = HandShape::default();
    let priors = Priors {
        perturbation: PerturbationConfig::default(),
        viewpoint: ViewpointPrior::default(),
    };
    let grasps = default_grasps();
    let outcome = rejection_sample(&grasps, 1, &priors, &camera, &shape, 42, true)?;
    let accepted = &outcome.accepted[0];
    let rendering = render_depth(&camera, &accepted.skeleton, &[], true, &Background::default());

    println!(
        "grasp {} after {} proposals",
        grasps[accepted.grasp].name, accepted.proposals
    );
    for (k, p) in accepted.skeleton.keypoints.iter().enumerate() {
        let proj = camera.project(p)?;
        println!(
            "keypoint {k:2}: ({:6.1}, {:6.1}) px at {:5.0} mm, visible {}",
            proj.u, proj.v, proj.depth, rendering.visibility[k]
        );
    }
    rendering.depth.write_pgm(&out)?;
    println!("wrote {out}");
    Ok(())
}
