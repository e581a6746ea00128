//! Egocentric hand pose detection on depth images with hierarchical
//! multi-class rejector cascades.
//!
//! The pipeline stages are:
//!
//! 1. [`geometry`] – pinhole camera, 26-DOF hand kinematics, analytic
//!    ray-cast depth rendering, self-intersection tests.
//! 2. [`synth`] – egocentric training data: grasp library, pose perturbation,
//!    viewpoint prior, rejection sampling, dataset manifests.
//! 3. [`features`] – HOG on depth (HOG-D) over fixed-size windows and part
//!    sub-vectors.
//! 4. [`pose_tree`] – k-means pose quantization and the coarse-to-fine class
//!    hierarchy.
//! 5. [`cascade`] – weak part classifiers, sequential training, and
//!    classification with a single cascade, the implicit exponentially-large
//!    ensemble, and an explicit enumeration oracle.
//! 6. [`detect`] – median filtering, depth-pruned sparse scanning, scale map,
//!    ranking and non-maximum suppression.
//! 7. [`eval`] – detection, viewpoint-consistency, conditional RMSE and
//!    fingertip metrics over N candidates.
//! 8. [`cli`] – configuration, subcommands and the benchmark harness behind
//!    the `handcascade` binary.
//!
//! Runnable walkthroughs for each stage live under `examples/`.

pub mod cascade;
pub mod cli;
pub mod detect;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod pose_tree;
pub mod synth;

pub use error::{Error, Result};
