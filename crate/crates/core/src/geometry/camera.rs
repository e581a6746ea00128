use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ideal pinhole camera. Camera frame: x right, y down, z along the optical
/// axis; pixel centers sit at integer coordinates with the origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Image-plane location of a projected point plus its depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Default for PinholeCamera {
    /// A 320x240 time-of-flight style sensor with roughly 72 degrees of
    /// horizontal field of view.
    fn default() -> Self {
        Self {
            fx: 220.0,
            fy: 220.0,
            cx: 159.5,
            cy: 119.5,
            width: 320,
            height: 240,
        }
    }
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::invalid(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be non-zero"));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::invalid("principal point must be finite"));
        }
        Ok(())
    }

    pub fn project(&self, point: &Vector3<f64>) -> Result<Projection> {
        if !(point.z > 0.0) {
            return Err(Error::BehindCamera(point.z));
        }
        Ok(Projection {
            u: self.fx * point.x / point.z + self.cx,
            v: self.fy * point.y / point.z + self.cy,
            depth: point.z,
        })
    }

    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth)
    }

    /// Direction of the ray through pixel `(u, v)`, scaled so its z component is 1.
    /// A point `t * ray` therefore has depth `t`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// True when `(u, v)` rounds to a pixel inside the image.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        self.pixel(u, v).is_some()
    }

    /// Nearest pixel to `(u, v)`, if it lies inside the image.
    pub fn pixel(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let x = u.round();
        let y = v.round();
        if x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64 {
            Some((x as usize, y as usize))
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam500() -> PinholeCamera {
        PinholeCamera::new(500.0, 500.0, 160.0, 120.0, 320, 240).unwrap()
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let p = cam500().project(&Vector3::new(0.0, 0.0, 500.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (160.0, 120.0, 500.0));
    }

    #[test]
    fn similar_triangles() {
        let p = cam500().project(&Vector3::new(100.0, 0.0, 500.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (260.0, 120.0, 500.0));
    }

    #[test]
    fn doubling_depth_halves_offset() {
        let cam = cam500();
        let a = cam.project(&Vector3::new(37.0, -21.0, 400.0)).unwrap();
        let b = cam.project(&Vector3::new(37.0, -21.0, 800.0)).unwrap();
        assert!(((a.u - cam.cx) - 2.0 * (b.u - cam.cx)).abs() < 1e-12);
        assert!(((a.v - cam.cy) - 2.0 * (b.v - cam.cy)).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let cam = cam500();
        assert!(matches!(
            cam.project(&Vector3::new(0.0, 0.0, 0.0)),
            Err(Error::BehindCamera(_))
        ));
        assert!(cam.project(&Vector3::new(1.0, 1.0, -5.0)).is_err());
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(PinholeCamera::new(0.0, 500.0, 0.0, 0.0, 10, 10).is_err());
        assert!(PinholeCamera::new(500.0, 500.0, 0.0, 0.0, 0, 10).is_err());
    }

    proptest::proptest! {
        #[test]
        fn back_projection_round_trip(
            x in -500.0f64..500.0, y in -500.0f64..500.0, z in 50.0f64..3000.0
        ) {
            let cam = cam500();
            let p = Vector3::new(x, y, z);
            let proj = cam.project(&p).unwrap();
            let back = cam.back_project(proj.u, proj.v, proj.depth);
            let err = (back - p).norm() / p.norm();
            proptest::prop_assert!(err < 1e-6);
        }
    }
}
