use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::grasps::GraspSpec;
use super::perturb::{perturb_pose, PerturbationConfig};
use super::viewpoint::{sample_viewpoint, Viewpoint, ViewpointPrior};
use crate::error::{Error, Result};
use crate::geometry::{forward_kinematics, self_intersects, HandPose, HandShape, PinholeCamera, Skeleton};

/// Proposals allowed per sample before sampling is declared stalled.
pub const PROPOSAL_WINDOW: usize = 10_000;
/// Minimum overall acceptance rate once a full window has been spent.
pub const MIN_ACCEPTANCE: f64 = 0.01;

/// Pose and viewpoint priors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    pub perturbation: PerturbationConfig,
    pub viewpoint: ViewpointPrior,
}

/// An accepted proposal.
#[derive(Debug, Clone)]
pub struct AcceptedPose {
    pub grasp: usize,
    /// Final pose with the viewpoint folded into the global placement.
    pub pose: HandPose,
    pub viewpoint: Viewpoint,
    pub skeleton: Skeleton,
    pub proposals: usize,
}

#[derive(Debug, Clone)]
pub struct RejectionOutcome {
    pub accepted: Vec<AcceptedPose>,
    pub proposals: usize,
}

impl RejectionOutcome {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.len() as f64 / self.proposals.max(1) as f64
    }
}

/// Places a hand-frame pose (articulation plus a wrist perturbation) in front
/// of the camera according to `view`.
pub fn compose_with_viewpoint(local: &HandPose, view: &Viewpoint, shape: &HandShape) -> HandPose {
    let (rv, tv) = view.placement(&shape.center());
    let rotation = rv * local.rotation();
    let translation = rv * local.translation() + tv;
    let mut out = *local;
    out.set_global(&rotation, &translation);
    out
}

/// True when every keypoint lies in front of the camera and inside the image.
pub fn in_view(skeleton: &Skeleton, camera: &PinholeCamera) -> bool {
    skeleton
        .keypoints
        .iter()
        .all(|p| camera.project(p).map(|q| camera.contains(q.u, q.v)).unwrap_or(false))
}

/// Validity test used for rejection: no self-contact, fully in view.
pub fn is_valid(skeleton: &Skeleton, camera: &PinholeCamera) -> bool {
    in_view(skeleton, camera) && !self_intersects(skeleton)
}

/// Draws one proposal for `grasp`.
pub fn propose<R: Rng + ?Sized>(
    grasp: &GraspSpec,
    priors: &Priors,
    shape: &HandShape,
    rng: &mut R,
) -> (HandPose, Viewpoint) {
    let cfg = PerturbationConfig {
        sigma: grasp.apply_overrides(&priors.perturbation.sigma),
        seed: priors.perturbation.seed,
    };
    let local = perturb_pose(&grasp.base, &cfg, shape, rng);
    let view = sample_viewpoint(&priors.viewpoint, rng);
    (compose_with_viewpoint(&local, &view, shape), view)
}

/// Independent random stream for sample `index`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Rejection-samples `n` valid poses. Sample `i` draws from its own stream, so
/// the result does not depend on the worker count. With `stratified`, sample
/// `i` uses grasp `i mod len`; otherwise a uniformly drawn grasp.
pub fn rejection_sample(
    grasps: &[GraspSpec],
    n: usize,
    priors: &Priors,
    camera: &PinholeCamera,
    shape: &HandShape,
    seed: u64,
    stratified: bool,
) -> Result<RejectionOutcome> {
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    if grasps.is_empty() {
        return Err(Error::invalid("at least one grasp is required"));
    }
    priors.perturbation.validate()?;
    priors.viewpoint.validate()?;
    camera.validate()?;

    let results: Vec<std::result::Result<AcceptedPose, usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let g = if stratified {
                i % grasps.len()
            } else {
                rng.random_range(0..grasps.len())
            };
            for attempt in 1..=PROPOSAL_WINDOW {
                let (pose, viewpoint) = propose(&grasps[g], priors, shape, &mut rng);
                let skeleton = match forward_kinematics(&pose, shape) {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                if is_valid(&skeleton, camera) {
                    return Ok(AcceptedPose {
                        grasp: g,
                        pose,
                        viewpoint,
                        skeleton,
                        proposals: attempt,
                    });
                }
            }
            Err(g)
        })
        .collect();

    let mut accepted = Vec::with_capacity(n);
    let mut proposals = 0usize;
    let mut stalled = None;
    for r in results {
        match r {
            Ok(a) => {
                proposals += a.proposals;
                accepted.push(a);
            }
            Err(g) => {
                proposals += PROPOSAL_WINDOW;
                stalled.get_or_insert(g);
            }
        }
    }
    if let Some(g) = stalled {
        return Err(Error::AcceptanceTooLow {
            accepted: accepted.len(),
            proposals,
            detail: format!(
                "grasp {:?} produced no valid pose in {PROPOSAL_WINDOW} proposals",
                grasps[g].name
            ),
        });
    }
    let outcome = RejectionOutcome { accepted, proposals };
    if outcome.proposals >= PROPOSAL_WINDOW && outcome.acceptance_rate() < MIN_ACCEPTANCE {
        return Err(Error::AcceptanceTooLow {
            accepted: outcome.accepted.len(),
            proposals: outcome.proposals,
            detail: "overall acceptance below 1%".into(),
        });
    }
    Ok(outcome)
}
