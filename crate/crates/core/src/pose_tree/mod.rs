//! Pose quantisation and the coarse-to-fine class hierarchy.

mod hierarchy;
mod kmeans;

pub use hierarchy::{average_linkage, build_hierarchy, Merge, PoseTree, TreeNode};
pub use kmeans::{kmeans_quantize, PoseClass, Quantization, TEMPLATE_SIDE};
