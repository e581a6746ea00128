//! 26-DOF hand model: pose vector, shape description and forward kinematics.
//!
//! Pose layout (`theta`, radians unless noted):
//!
//! | index  | meaning                                                        |
//! |--------|----------------------------------------------------------------|
//! | 0..3   | wrist translation in camera coordinates (mm)                   |
//! | 3..6   | wrist rotation about camera x, y, z; `R = Rz * Ry * Rx`        |
//! | 6..26  | per finger (thumb, index, middle, ring, little): abduction,    |
//! |        | MCP flexion, PIP flexion, DIP flexion                          |
//!
//! Hand frame: origin at the wrist, +y towards the fingers, +x towards the
//! thumb side, +z out of the palm. Flexion curls a finger towards +z.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const POSE_DOF: usize = 26;
pub const GLOBAL_DOF: usize = 6;
pub const FINGERS: usize = 5;
pub const JOINTS_PER_FINGER: usize = 4;
/// Wrist plus four points per finger.
pub const KEYPOINTS: usize = 1 + FINGERS * JOINTS_PER_FINGER;
/// Keypoints that are scored: every keypoint except the wrist root.
pub const SCORED_KEYPOINTS: usize = KEYPOINTS - 1;
pub const BONES: usize = FINGERS * 4;

pub const FINGER_NAMES: [&str; FINGERS] = ["thumb", "index", "middle", "ring", "little"];

/// Keypoint index of the fingertip of finger `f`.
pub const fn tip_index(f: usize) -> usize {
    4 + 4 * f
}

/// Scored-keypoint index (wrist excluded) of each fingertip.
pub const FINGERTIPS_SCORED: [usize; FINGERS] = [3, 7, 11, 15, 19];

/// Keypoint endpoints of every bone: a metacarpal (wrist to finger base)
/// followed by three phalanges per finger.
pub fn bone_endpoints() -> [(usize, usize); BONES] {
    let mut out = [(0, 0); BONES];
    for f in 0..FINGERS {
        let base = 1 + 4 * f;
        out[4 * f] = (0, base);
        out[4 * f + 1] = (base, base + 1);
        out[4 * f + 2] = (base + 1, base + 2);
        out[4 * f + 3] = (base + 2, base + 3);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandPose {
    pub theta: [f64; POSE_DOF],
}

impl Default for HandPose {
    fn default() -> Self {
        Self { theta: [0.0; POSE_DOF] }
    }
}

impl HandPose {
    pub fn from_articulation(articulation: [[f64; 4]; FINGERS]) -> Self {
        let mut pose = Self::default();
        for (f, a) in articulation.iter().enumerate() {
            pose.theta[GLOBAL_DOF + 4 * f..GLOBAL_DOF + 4 * f + 4].copy_from_slice(a);
        }
        pose
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.theta[0], self.theta[1], self.theta[2])
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.theta[3], self.theta[4], self.theta[5])
    }

    /// Replaces the global placement with `rotation` and `translation`.
    pub fn set_global(&mut self, rotation: &Rotation3<f64>, translation: &Vector3<f64>) {
        let (rx, ry, rz) = rotation.euler_angles();
        self.theta[0] = translation.x;
        self.theta[1] = translation.y;
        self.theta[2] = translation.z;
        self.theta[3] = rx;
        self.theta[4] = ry;
        self.theta[5] = rz;
    }

    pub fn finger(&self, f: usize) -> [f64; 4] {
        let i = GLOBAL_DOF + 4 * f;
        [self.theta[i], self.theta[i + 1], self.theta[i + 2], self.theta[i + 3]]
    }

    /// Maps a hand-frame point into camera coordinates.
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }
}

/// One finger chain attached to the rigid palm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerShape {
    /// Base joint (MCP, or CMC for the thumb) in the hand frame, mm.
    pub base: [f64; 3],
    /// Orientation of the straight finger as (splay about z, lift about x,
    /// twist about the finger axis), radians.
    pub frame: [f64; 3],
    /// Proximal, middle and distal bone lengths, mm.
    pub lengths: [f64; 3],
    /// Capsule radius of the metacarpal, then the three phalanges, mm.
    pub radii: [f64; 4],
    /// (lo, hi) limits for abduction, MCP, PIP and DIP angles, radians.
    pub limits: [[f64; 2]; 4],
}

impl FingerShape {
    pub fn rest_rotation(&self) -> Rotation3<f64> {
        let [splay, lift, twist] = self.frame;
        Rotation3::from_axis_angle(&Vector3::z_axis(), splay)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), lift)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), twist)
    }

    pub fn base(&self) -> Vector3<f64> {
        Vector3::from(self.base)
    }
}

/// Bone lengths, capsule radii and joint limits of a hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandShape {
    pub fingers: [FingerShape; FINGERS],
    /// Palm capsule endpoints (hand frame) and radius.
    pub palm: [[f64; 3]; 2],
    pub palm_radius: f64,
    pub forearm_length: f64,
    pub forearm_radius: f64,
    /// Hand-frame point whose projection centres the ground-truth box.
    pub center: [f64; 3],
}

impl Default for HandShape {
    fn default() -> Self {
        let finger_limits = [[-0.35, 0.35], [-0.35, 1.6], [0.0, 1.9], [0.0, 1.4]];
        let finger = |base: [f64; 3], splay_deg: f64, lengths: [f64; 3], radii: [f64; 4]| FingerShape {
            base,
            frame: [splay_deg.to_radians(), 0.0, 0.0],
            lengths,
            radii,
            limits: finger_limits,
        };
        Self {
            fingers: [
                FingerShape {
                    base: [30.0, 22.0, 8.0],
                    frame: [(-50f64).to_radians(), 25f64.to_radians(), (-40f64).to_radians()],
                    lengths: [40.0, 32.0, 27.0],
                    radii: [10.0, 10.0, 9.0, 8.0],
                    limits: [[-0.6, 0.6], [-0.3, 1.0], [-0.2, 1.2], [-0.3, 1.4]],
                },
                finger([25.0, 80.0, 0.0], -8.0, [40.0, 24.0, 20.0], [8.0, 8.0, 7.5, 6.5]),
                finger([5.0, 84.0, 0.0], 0.0, [45.0, 28.0, 21.0], [8.0, 8.5, 8.0, 7.0]),
                finger([-15.0, 80.0, 0.0], 8.0, [42.0, 27.0, 20.0], [8.0, 8.0, 7.5, 6.5]),
                finger([-33.0, 72.0, 0.0], 18.0, [33.0, 20.0, 18.0], [7.5, 7.0, 6.5, 6.0]),
            ],
            palm: [[-2.0, 22.0, 3.0], [-2.0, 62.0, 3.0]],
            palm_radius: 17.0,
            forearm_length: 240.0,
            forearm_radius: 26.0,
            center: [2.0, 80.0, 0.0],
        }
    }
}

impl HandShape {
    pub fn validate(&self) -> Result<()> {
        for (f, finger) in self.fingers.iter().enumerate() {
            if finger.lengths.iter().chain(&finger.radii).any(|&v| !(v > 0.0)) {
                return Err(Error::invalid(format!(
                    "{}: lengths and radii must be positive",
                    FINGER_NAMES[f]
                )));
            }
            if finger.limits.iter().any(|l| !(l[0] <= l[1])) {
                return Err(Error::invalid(format!(
                    "{}: empty joint limit interval",
                    FINGER_NAMES[f]
                )));
            }
            if finger.base().norm() <= 0.0 {
                return Err(Error::invalid("finger base coincides with the wrist"));
            }
        }
        if !(self.palm_radius > 0.0 && self.forearm_radius > 0.0 && self.forearm_length > 0.0) {
            return Err(Error::invalid("palm and forearm dimensions must be positive"));
        }
        Ok(())
    }

    /// Length of each of the 20 bones, ordered as [`bone_endpoints`].
    pub fn bone_lengths(&self) -> [f64; BONES] {
        let mut out = [0.0; BONES];
        for (f, finger) in self.fingers.iter().enumerate() {
            out[4 * f] = finger.base().norm();
            out[4 * f + 1..4 * f + 4].copy_from_slice(&finger.lengths);
        }
        out
    }

    pub fn bone_radii(&self) -> [f64; BONES] {
        let mut out = [0.0; BONES];
        for (f, finger) in self.fingers.iter().enumerate() {
            out[4 * f..4 * f + 4].copy_from_slice(&finger.radii);
        }
        out
    }

    /// Largest radius among the bones meeting at each keypoint.
    pub fn joint_radii(&self) -> [f64; KEYPOINTS] {
        let mut out = [0.0f64; KEYPOINTS];
        let radii = self.bone_radii();
        for (b, (i, j)) in bone_endpoints().into_iter().enumerate() {
            out[i] = out[i].max(radii[b]);
            out[j] = out[j].max(radii[b]);
        }
        out
    }

    /// `(lo, hi)` limits for pose element `index` (articulation only).
    pub fn limit(&self, index: usize) -> Option<[f64; 2]> {
        if !(GLOBAL_DOF..POSE_DOF).contains(&index) {
            return None;
        }
        let k = index - GLOBAL_DOF;
        Some(self.fingers[k / 4].limits[k % 4])
    }

    /// Clamps every articulation angle into its limits.
    pub fn clamp(&self, pose: &mut HandPose) {
        for i in GLOBAL_DOF..POSE_DOF {
            let [lo, hi] = self.limit(i).expect("articulation index");
            pose.theta[i] = pose.theta[i].clamp(lo, hi);
        }
    }

    /// Keypoints of the straight, unrotated hand in the hand frame.
    pub fn rest_keypoints(&self) -> [Vector3<f64>; KEYPOINTS] {
        let mut out = [Vector3::zeros(); KEYPOINTS];
        for (f, finger) in self.fingers.iter().enumerate() {
            let dir = finger.rest_rotation() * Vector3::y();
            let mut p = finger.base();
            out[1 + 4 * f] = p;
            for (k, len) in finger.lengths.iter().enumerate() {
                p += dir * *len;
                out[2 + 4 * f + k] = p;
            }
        }
        out
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }

    /// Canonical hand size: diameter of the sphere about [`center`](Self::center)
    /// enclosing every rest-pose capsule, mm.
    pub fn size(&self) -> f64 {
        let c = self.center();
        let radii = self.joint_radii();
        let rest = self.rest_keypoints();
        let reach = rest
            .iter()
            .zip(radii)
            .map(|(p, r)| (p - c).norm() + r)
            .fold(0.0, f64::max);
        2.0 * reach
    }
}

/// Line segment with a radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

/// Posed hand in camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    /// Wrist followed by (base, PIP, DIP, tip) for thumb..little, mm.
    pub keypoints: [Vector3<f64>; KEYPOINTS],
    /// The 20 bone capsules, ordered as [`bone_endpoints`].
    pub capsules: Vec<Capsule>,
    /// Palm body; rendered, but not part of the bone set.
    pub palm: Capsule,
    /// Forearm stub leaving the wrist; rendered only.
    pub forearm: Capsule,
    /// Local radius at each keypoint (largest adjoining bone radius).
    pub joint_radii: [f64; KEYPOINTS],
}

impl Skeleton {
    /// The 20 scored keypoints (wrist excluded).
    pub fn scored(&self) -> &[Vector3<f64>] {
        &self.keypoints[1..]
    }
}

/// Fixed forearm direction in camera coordinates: down the image and back
/// towards a chest-mounted sensor.
fn forearm_direction() -> Vector3<f64> {
    Vector3::new(0.25, 1.0, -0.55).normalize()
}

/// Checks that every articulation angle is finite and inside its limits.
pub fn validate_pose(pose: &HandPose, shape: &HandShape) -> Result<()> {
    for (i, &v) in pose.theta.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::JointLimit {
                joint: i,
                value: v,
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            });
        }
        if let Some([lo, hi]) = shape.limit(i) {
            if v < lo || v > hi {
                return Err(Error::JointLimit {
                    joint: i,
                    value: v,
                    lo,
                    hi,
                });
            }
        }
    }
    Ok(())
}

pub fn forward_kinematics(pose: &HandPose, shape: &HandShape) -> Result<Skeleton> {
    validate_pose(pose, shape)?;
    let rot = pose.rotation();
    let trans = pose.translation();
    let to_cam = |p: Vector3<f64>| rot * p + trans;

    let mut keypoints = [Vector3::zeros(); KEYPOINTS];
    keypoints[0] = trans;
    for (f, finger) in shape.fingers.iter().enumerate() {
        let [abd, mcp, pip, dip] = pose.finger(f);
        let mut frame = finger.rest_rotation()
            * Rotation3::from_axis_angle(&Vector3::z_axis(), abd)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), mcp);
        let mut p = finger.base();
        keypoints[1 + 4 * f] = to_cam(p);
        let flex = [pip, dip];
        for (k, len) in finger.lengths.iter().enumerate() {
            p += frame * Vector3::y() * *len;
            keypoints[2 + 4 * f + k] = to_cam(p);
            if k < 2 {
                frame *= Rotation3::from_axis_angle(&Vector3::x_axis(), flex[k]);
            }
        }
    }

    let radii = shape.bone_radii();
    let capsules = bone_endpoints()
        .iter()
        .zip(radii)
        .map(|(&(i, j), radius)| Capsule {
            a: keypoints[i],
            b: keypoints[j],
            radius,
        })
        .collect();
    let palm = Capsule {
        a: to_cam(Vector3::from(shape.palm[0])),
        b: to_cam(Vector3::from(shape.palm[1])),
        radius: shape.palm_radius,
    };
    let forearm = Capsule {
        a: trans,
        b: trans + forearm_direction() * shape.forearm_length,
        radius: shape.forearm_radius,
    };
    Ok(Skeleton {
        keypoints,
        capsules,
        palm,
        forearm,
        joint_radii: shape.joint_radii(),
    })
}
