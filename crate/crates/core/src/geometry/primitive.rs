use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::hand::{Capsule, HandPose};
use crate::error::{Error, Result};

/// Shape of an interacting object, dimensions in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrimitiveKind {
    Sphere {
        radius: f64,
    },
    /// Capped cylinder along its local z axis.
    Cylinder {
        radius: f64,
        length: f64,
    },
    Box {
        size: [f64; 3],
    },
}

/// An object rigidly attached to the palm frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub kind: PrimitiveKind,
    /// Centre in the hand frame, mm.
    pub position: [f64; 3],
    /// Rotation about x, y, z of the hand frame, radians (`Rz * Ry * Rx`).
    pub rotation: [f64; 3],
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            PrimitiveKind::Sphere { radius } => radius > 0.0,
            PrimitiveKind::Cylinder { radius, length } => radius > 0.0 && length > 0.0,
            PrimitiveKind::Box { size } => size.iter().all(|&s| s > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "primitive dimensions must be positive: {self:?}"
            )))
        }
    }

    /// Places the primitive in camera coordinates using the hand's global pose.
    pub fn place(&self, pose: &HandPose) -> Shape {
        let hand_rot = pose.rotation();
        let local = Rotation3::from_euler_angles(self.rotation[0], self.rotation[1], self.rotation[2]);
        let center = pose.to_camera(&Vector3::from(self.position));
        let rotation = hand_rot * local;
        match self.kind {
            PrimitiveKind::Sphere { radius } => Shape::Sphere { center, radius },
            PrimitiveKind::Cylinder { radius, length } => Shape::Cylinder {
                center,
                rotation,
                radius,
                half_length: length / 2.0,
            },
            PrimitiveKind::Box { size } => Shape::Cuboid {
                center,
                rotation,
                half: Vector3::new(size[0] / 2.0, size[1] / 2.0, size[2] / 2.0),
            },
        }
    }
}

/// Renderable solid in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    Capsule(Capsule),
    Cylinder {
        center: Vector3<f64>,
        rotation: Rotation3<f64>,
        radius: f64,
        half_length: f64,
    },
    Cuboid {
        center: Vector3<f64>,
        rotation: Rotation3<f64>,
        half: Vector3<f64>,
    },
}

/// Smallest ray parameter accepted as a hit, mm.
pub const NEAR: f64 = 1.0;

impl Shape {
    /// Centre and radius of a sphere enclosing the shape.
    pub fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        match *self {
            Shape::Sphere { center, radius } => (center, radius),
            Shape::Capsule(c) => ((c.a + c.b) / 2.0, (c.b - c.a).norm() / 2.0 + c.radius),
            Shape::Cylinder {
                center,
                radius,
                half_length,
                ..
            } => (center, (radius * radius + half_length * half_length).sqrt()),
            Shape::Cuboid { center, half, .. } => (center, half.norm()),
        }
    }

    /// Depth of the first surface hit along `ray` (a direction with z = 1, so the
    /// ray parameter equals depth), or `None`.
    pub fn intersect(&self, ray: &Vector3<f64>) -> Option<f64> {
        match *self {
            Shape::Sphere { center, radius } => sphere_hit(ray, &center, radius),
            Shape::Capsule(c) => capsule_hit(ray, &c),
            Shape::Cylinder {
                center,
                rotation,
                radius,
                half_length,
            } => {
                let inv = rotation.inverse();
                let o = inv * (-center);
                let d = inv * ray;
                cylinder_local_hit(&o, &d, radius, half_length)
            }
            Shape::Cuboid { center, rotation, half } => {
                let inv = rotation.inverse();
                let o = inv * (-center);
                let d = inv * ray;
                box_local_hit(&o, &d, &half)
            }
        }
    }
}

fn nearest_root(a: f64, b: f64, c: f64) -> Option<f64> {
    // a t^2 + 2 b t + c = 0
    if a.abs() < 1e-15 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = (-b - sq) / a;
    let t1 = (-b + sq) / a;
    let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
    if lo > NEAR {
        Some(lo)
    } else if hi > NEAR {
        Some(hi)
    } else {
        None
    }
}

fn sphere_hit(ray: &Vector3<f64>, center: &Vector3<f64>, radius: f64) -> Option<f64> {
    // |t d - c|^2 = r^2
    nearest_root(ray.dot(ray), -ray.dot(center), center.dot(center) - radius * radius)
}

fn capsule_hit(ray: &Vector3<f64>, cap: &Capsule) -> Option<f64> {
    let mut best = f64::INFINITY;
    for end in [&cap.a, &cap.b] {
        if let Some(t) = sphere_hit(ray, end, cap.radius) {
            best = best.min(t);
        }
    }
    let axis = cap.b - cap.a;
    let len2 = axis.dot(&axis);
    if len2 > 1e-12 {
        // infinite cylinder about the axis, restricted to the segment
        let oa = -cap.a;
        let d_par = ray.dot(&axis) / len2;
        let o_par = oa.dot(&axis) / len2;
        let dp = ray - axis * d_par;
        let op = oa - axis * o_par;
        let a = dp.dot(&dp);
        let b = dp.dot(&op);
        let c = op.dot(&op) - cap.radius * cap.radius;
        if a > 1e-15 {
            let disc = b * b - a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for t in [(-b - sq) / a, (-b + sq) / a] {
                    let s = o_par + t * d_par;
                    if t > NEAR && (0.0..=1.0).contains(&s) {
                        best = best.min(t);
                    }
                }
            }
        }
    }
    best.is_finite().then_some(best)
}

fn cylinder_local_hit(o: &Vector3<f64>, d: &Vector3<f64>, radius: f64, half: f64) -> Option<f64> {
    let mut best = f64::INFINITY;
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-15 {
        let b = o.x * d.x + o.y * d.y;
        let c = o.x * o.x + o.y * o.y - radius * radius;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / a, (-b + sq) / a] {
                let z = o.z + t * d.z;
                if t > NEAR && z.abs() <= half {
                    best = best.min(t);
                }
            }
        }
    }
    if d.z.abs() > 1e-15 {
        for cap in [-half, half] {
            let t = (cap - o.z) / d.z;
            let x = o.x + t * d.x;
            let y = o.y + t * d.y;
            if t > NEAR && x * x + y * y <= radius * radius {
                best = best.min(t);
            }
        }
    }
    best.is_finite().then_some(best)
}

fn box_local_hit(o: &Vector3<f64>, d: &Vector3<f64>, half: &Vector3<f64>) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k].abs() > half[k] {
                return None;
            }
            continue;
        }
        let t0 = (-half[k] - o[k]) / d[k];
        let t1 = (half[k] - o[k]) / d[k];
        let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        t_near = t_near.max(lo);
        t_far = t_far.min(hi);
        if t_near > t_far {
            return None;
        }
    }
    if t_near > NEAR {
        Some(t_near)
    } else if t_far > NEAR {
        Some(t_far)
    } else {
        None
    }
}
