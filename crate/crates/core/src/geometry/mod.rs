//! Camera model, hand kinematics, depth rendering and validity tests.

mod boxes;
mod camera;
mod collision;
mod depth;
mod hand;
mod primitive;
mod render;

pub use boxes::BoundingBox;
pub use camera::{PinholeCamera, Projection};
pub use collision::{segment_distance, self_intersects};
pub use depth::DepthImage;
pub use hand::{
    bone_endpoints, forward_kinematics, tip_index, validate_pose, Capsule, FingerShape, HandPose, HandShape, Skeleton,
    BONES, FINGERS, FINGERTIPS_SCORED, FINGER_NAMES, GLOBAL_DOF, KEYPOINTS, POSE_DOF, SCORED_KEYPOINTS,
};
pub use primitive::{Primitive, PrimitiveKind, Shape};
pub use render::{
    composite, ray_cast, render_depth, render_scene, Background, Rendering, Scene, ZBuffer, VISIBILITY_TOLERANCE,
};
