use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{forward_kinematics, self_intersects, HandPose, HandShape, Primitive, PrimitiveKind, POSE_DOF};

/// Sigma replacement for one pose element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaOverride {
    pub index: usize,
    pub sigma: f64,
}

/// A base grasp: articulation, optional held object and noise overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspSpec {
    pub name: String,
    pub base: HandPose,
    #[serde(default)]
    pub object: Option<Primitive>,
    #[serde(default)]
    pub sigma_overrides: Vec<SigmaOverride>,
}

impl GraspSpec {
    /// Base pose must be within limits and free of self-contact.
    pub fn validate(&self, shape: &HandShape) -> Result<()> {
        let skel = forward_kinematics(&self.base, shape)?;
        if self_intersects(&skel) {
            return Err(Error::invalid(format!(
                "grasp {:?}: base pose self-intersects",
                self.name
            )));
        }
        if let Some(obj) = &self.object {
            obj.validate()?;
        }
        if let Some(o) = self
            .sigma_overrides
            .iter()
            .find(|o| o.index >= POSE_DOF || !(o.sigma >= 0.0))
        {
            return Err(Error::invalid(format!(
                "grasp {:?}: bad sigma override {o:?}",
                self.name
            )));
        }
        Ok(())
    }

    pub fn apply_overrides(&self, sigma: &[f64; POSE_DOF]) -> [f64; POSE_DOF] {
        let mut out = *sigma;
        for o in &self.sigma_overrides {
            out[o.index] = o.sigma;
        }
        out
    }
}

const EXTENDED: [f64; 4] = [0.0, 0.0, 0.0, 0.0];
const CURLED: [f64; 4] = [0.0, 1.35, 1.45, 0.75];
const THUMB_TUCKED: [f64; 4] = [0.1, 0.35, 0.6, 0.55];

fn grasp(name: &str, articulation: [[f64; 4]; 5], object: Option<Primitive>) -> GraspSpec {
    GraspSpec {
        name: name.to_string(),
        base: HandPose::from_articulation(articulation),
        object,
        sigma_overrides: Vec::new(),
    }
}

fn held(kind: PrimitiveKind, position: [f64; 3], rotation: [f64; 3]) -> Option<Primitive> {
    Some(Primitive {
        kind,
        position,
        rotation,
    })
}

/// The built-in grasp library: eight free-hand configurations and eight
/// hand-object grasps.
pub fn default_grasps() -> Vec<GraspSpec> {
    use std::f64::consts::FRAC_PI_2;
    let relaxed = [0.0, 0.3, 0.4, 0.2];
    vec![
        grasp("open_palm", [EXTENDED; 5], None),
        grasp(
            "relaxed",
            [[0.0, 0.2, 0.2, 0.1], relaxed, relaxed, relaxed, relaxed],
            None,
        ),
        grasp("fist", [THUMB_TUCKED, CURLED, CURLED, CURLED, CURLED], None),
        grasp("point", [[0.3, 0.55, 0.5, 0.4], EXTENDED, CURLED, CURLED, CURLED], None),
        grasp(
            "thumbs_up",
            [[-0.3, 0.0, 0.0, 0.0], CURLED, CURLED, CURLED, CURLED],
            None,
        ),
        grasp(
            "victory",
            [
                THUMB_TUCKED,
                [-0.2, 0.0, 0.0, 0.0],
                [0.2, 0.0, 0.0, 0.0],
                CURLED,
                CURLED,
            ],
            None,
        ),
        grasp(
            "claw",
            [
                [0.2, 0.4, 0.6, 0.6],
                [0.0, 0.2, 1.2, 1.0],
                [0.0, 0.2, 1.2, 1.0],
                [0.0, 0.2, 1.2, 1.0],
                [0.0, 0.2, 1.2, 1.0],
            ],
            None,
        ),
        grasp(
            "spread",
            [
                [-0.5, -0.2, 0.0, 0.0],
                [-0.3, -0.1, 0.0, 0.0],
                [-0.05, -0.1, 0.0, 0.0],
                [0.15, -0.1, 0.0, 0.0],
                [0.3, -0.1, 0.0, 0.0],
            ],
            None,
        ),
        grasp(
            "pinch",
            [
                [0.45, 0.55, 0.5, 0.35],
                [0.0, 0.75, 0.8, 0.5],
                [0.0, 0.25, 0.3, 0.2],
                [0.0, 0.25, 0.3, 0.2],
                [0.0, 0.25, 0.3, 0.2],
            ],
            held(PrimitiveKind::Sphere { radius: 9.0 }, [28.0, 125.0, 38.0], [0.0; 3]),
        ),
        grasp(
            "cylinder_grip",
            [
                [0.4, 0.25, 0.25, 0.25],
                [0.0, 0.9, 1.0, 0.6],
                [0.0, 0.9, 1.0, 0.6],
                [0.0, 0.9, 1.0, 0.6],
                [0.0, 0.9, 1.0, 0.6],
            ],
            held(
                PrimitiveKind::Cylinder {
                    radius: 24.0,
                    length: 150.0,
                },
                [0.0, 100.0, 42.0],
                [0.0, FRAC_PI_2, 0.0],
            ),
        ),
        grasp(
            "sphere_grip",
            [
                [0.4, 0.45, 0.25, 0.25],
                [-0.2, 0.6, 0.6, 0.4],
                [0.0, 0.6, 0.6, 0.4],
                [0.1, 0.6, 0.6, 0.4],
                [0.25, 0.6, 0.6, 0.4],
            ],
            held(PrimitiveKind::Sphere { radius: 40.0 }, [0.0, 105.0, 50.0], [0.0; 3]),
        ),
        grasp(
            "lateral_grip",
            [[0.0, 0.1, 0.1, 0.0], CURLED, CURLED, CURLED, CURLED],
            held(
                PrimitiveKind::Box {
                    size: [8.0, 55.0, 70.0],
                },
                [48.0, 95.0, 25.0],
                [0.0; 3],
            ),
        ),
        grasp(
            "mug_grip",
            [
                [0.6, 0.45, 0.4, 0.25],
                [0.0, 0.7, 0.7, 0.4],
                [0.0, 0.7, 0.7, 0.4],
                [0.0, 0.7, 0.7, 0.4],
                [0.0, 0.7, 0.7, 0.4],
            ],
            held(
                PrimitiveKind::Cylinder {
                    radius: 40.0,
                    length: 100.0,
                },
                [0.0, 110.0, 60.0],
                [FRAC_PI_2, 0.0, 0.0],
            ),
        ),
        grasp(
            "tripod",
            [
                [0.45, 0.5, 0.5, 0.4],
                [0.0, 0.7, 0.7, 0.5],
                [0.0, 0.7, 0.7, 0.5],
                [0.0, 0.5, 0.6, 0.3],
                [0.0, 0.5, 0.6, 0.3],
            ],
            held(PrimitiveKind::Sphere { radius: 14.0 }, [18.0, 130.0, 45.0], [0.0; 3]),
        ),
        grasp(
            "hook_grip",
            [
                [-0.2, 0.0, 0.0, 0.0],
                [0.0, 0.2, 1.5, 1.0],
                [0.0, 0.2, 1.5, 1.0],
                [0.0, 0.2, 1.5, 1.0],
                [0.0, 0.2, 1.5, 1.0],
            ],
            held(
                PrimitiveKind::Cylinder {
                    radius: 10.0,
                    length: 130.0,
                },
                [0.0, 135.0, 20.0],
                [0.0, FRAC_PI_2, 0.0],
            ),
        ),
        grasp(
            "flat_hold",
            [relaxed, EXTENDED, EXTENDED, EXTENDED, EXTENDED],
            held(
                PrimitiveKind::Box {
                    size: [90.0, 120.0, 10.0],
                },
                [0.0, 90.0, 30.0],
                [0.0; 3],
            ),
        ),
    ]
}

/// Looks up grasps by name; an empty list selects the whole library.
pub fn select_grasps(names: &[String]) -> Result<Vec<GraspSpec>> {
    let all = default_grasps();
    if names.is_empty() {
        return Ok(all);
    }
    names
        .iter()
        .map(|n| {
            all.iter()
                .find(|g| &g.name == n)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("unknown grasp {n:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_has_sixteen_valid_grasps() {
        let shape = HandShape::default();
        let grasps = default_grasps();
        assert_eq!(grasps.len(), 16);
        let mut names: Vec<_> = grasps.iter().map(|g| g.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 16);
        for g in &grasps {
            g.validate(&shape).unwrap_or_else(|e| panic!("{}: {e}", g.name));
        }
        assert_eq!(grasps.iter().filter(|g| g.object.is_some()).count(), 8);
    }

    #[test]
    fn select_by_name() {
        let got = select_grasps(&["fist".into(), "pinch".into()]).unwrap();
        assert_eq!(got[1].name, "pinch");
        assert!(select_grasps(&["juggle".into()]).is_err());
    }

    #[test]
    fn overrides_replace_sigma() {
        let mut g = default_grasps().remove(0);
        g.sigma_overrides.push(SigmaOverride { index: 9, sigma: 0.5 });
        let s = g.apply_overrides(&[0.1; POSE_DOF]);
        assert_eq!(s[9], 0.5);
        assert_eq!(s[8], 0.1);
    }
}
