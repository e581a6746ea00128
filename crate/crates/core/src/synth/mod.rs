//! Synthetic training data: grasp library, pose and viewpoint priors,
//! rejection sampling and dataset generation.

mod dataset;
mod grasps;
mod label;
mod perturb;
mod sampler;
mod viewpoint;

pub use dataset::{
    distractor_scene, generate_dataset, ground_truth_box, write_manifest, BackgroundFrame, Dataset, DatasetManifest,
    HarvestConfig, Sample, SynthConfig, Window, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use grasps::{default_grasps, select_grasps, GraspSpec, SigmaOverride};
pub use label::{canonical_label, denormalize, LABEL_DIM};
pub use perturb::{perturb_pose, PerturbationConfig, FINGER_SIGMA, WRIST_ROTATION_SIGMA, WRIST_TRANSLATION_SIGMA_MM};
pub use sampler::{
    compose_with_viewpoint, in_view, is_valid, propose, rejection_sample, sample_rng, AcceptedPose, Priors,
    RejectionOutcome, MIN_ACCEPTANCE, PROPOSAL_WINDOW,
};
pub use viewpoint::{sample_viewpoint, Viewpoint, ViewpointPrior};
