use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform ranges for the egocentric camera viewpoint. Angles in degrees.
///
/// Azimuth is measured about the back-of-hand normal from the finger
/// direction (180 = camera behind the wrist). Elevation is the pitch of the
/// viewing ray (negative = looking down onto the hand). Bank rolls the camera
/// about its optical axis. The offsets place the hand centre off the optical
/// axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViewpointPrior {
    pub azimuth: [f64; 2],
    pub elevation: [f64; 2],
    pub bank: [f64; 2],
    /// Camera to hand-centre distance, mm.
    pub distance: [f64; 2],
    pub offset_x: [f64; 2],
    pub offset_y: [f64; 2],
}

impl Default for ViewpointPrior {
    fn default() -> Self {
        Self {
            azimuth: [150.0, 210.0],
            elevation: [-30.0, 10.0],
            bank: [-30.0, 30.0],
            distance: [250.0, 700.0],
            offset_x: [-20.0, 20.0],
            offset_y: [-14.0, 14.0],
        }
    }
}

impl ViewpointPrior {
    /// Every range collapsed to a single value.
    pub fn fixed(v: &Viewpoint) -> Self {
        Self {
            azimuth: [v.azimuth; 2],
            elevation: [v.elevation; 2],
            bank: [v.bank; 2],
            distance: [v.distance; 2],
            offset_x: [v.offset_x; 2],
            offset_y: [v.offset_y; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("azimuth", self.azimuth),
            ("elevation", self.elevation),
            ("bank", self.bank),
            ("distance", self.distance),
            ("offset_x", self.offset_x),
            ("offset_y", self.offset_y),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        if !(self.distance[0] > 0.0) {
            return Err(Error::invalid("distance range must be positive"));
        }
        if self.offset_x[0].abs().max(self.offset_x[1].abs()) >= 89.0
            || self.offset_y[0].abs().max(self.offset_y[1].abs()) >= 89.0
        {
            return Err(Error::invalid("offset angles must stay below 89 degrees"));
        }
        Ok(())
    }
}

/// One draw from a [`ViewpointPrior`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub azimuth: f64,
    pub elevation: f64,
    pub bank: f64,
    pub distance: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl Viewpoint {
    /// Straight behind the wrist, level, on the optical axis.
    pub fn centered(distance: f64) -> Self {
        Self {
            azimuth: 180.0,
            elevation: 0.0,
            bank: 0.0,
            distance,
            offset_x: 0.0,
            offset_y: 0.0,
        }
    }

    /// Rotation taking hand-frame vectors into camera coordinates.
    pub fn rotation(&self) -> Rotation3<f64> {
        let az = self.azimuth.to_radians();
        let el = self.elevation.to_radians();
        let bank = self.bank.to_radians();
        // back of the hand faces "up"; fingers point "forward"; thumb side is "right"
        let up = -Vector3::z();
        let forward = Vector3::y();
        let right = Vector3::x();
        let horizontal = forward * az.cos() + right * az.sin();
        let view = (-horizontal) * el.cos() + up * el.sin();
        let down = (-up - view * (-up).dot(&view)).normalize();
        let across = down.cross(&view);
        let (s, c) = bank.sin_cos();
        let x_axis = across * c + down * s;
        let y_axis = -across * s + down * c;
        let m = Matrix3::from_rows(&[x_axis.transpose(), y_axis.transpose(), view.transpose()]);
        Rotation3::from_matrix_unchecked(m)
    }

    /// Camera-space position of the hand centre.
    pub fn target(&self) -> Vector3<f64> {
        let dir = Vector3::new(self.offset_x.to_radians().tan(), self.offset_y.to_radians().tan(), 1.0).normalize();
        dir * self.distance
    }

    /// Rigid transform (rotation, translation) mapping hand-frame points to
    /// camera coordinates so that `center` lands on [`target`](Self::target).
    pub fn placement(&self, center: &Vector3<f64>) -> (Rotation3<f64>, Vector3<f64>) {
        let rot = self.rotation();
        let t = self.target() - rot * center;
        (rot, t)
    }
}

/// Uniform draw in each range of the prior.
pub fn sample_viewpoint<R: Rng + ?Sized>(prior: &ViewpointPrior, rng: &mut R) -> Viewpoint {
    let mut draw = |[lo, hi]: [f64; 2]| {
        let u: f64 = rng.random();
        lo + u * (hi - lo)
    };
    Viewpoint {
        azimuth: draw(prior.azimuth),
        elevation: draw(prior.elevation),
        bank: draw(prior.bank),
        distance: draw(prior.distance),
        offset_x: draw(prior.offset_x),
        offset_y: draw(prior.offset_y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_prior_is_deterministic() {
        let v = Viewpoint {
            azimuth: 170.0,
            elevation: -12.0,
            bank: 5.0,
            distance: 420.0,
            offset_x: 3.0,
            offset_y: -2.0,
        };
        let prior = ViewpointPrior::fixed(&v);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..5 {
            assert_eq!(sample_viewpoint(&prior, &mut rng), v);
        }
    }

    #[test]
    fn draws_stay_in_range_and_centre_on_the_middle() {
        let prior = ViewpointPrior::default();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 10_000;
        let mut sum_az = 0.0;
        let mut min_az = f64::INFINITY;
        let mut max_az = f64::NEG_INFINITY;
        for _ in 0..n {
            let v = sample_viewpoint(&prior, &mut rng);
            assert!(v.elevation <= 10.0 && v.elevation >= -30.0);
            assert!(v.bank.abs() <= 30.0);
            assert!(v.distance >= 250.0 && v.distance <= 700.0);
            min_az = min_az.min(v.azimuth);
            max_az = max_az.max(v.azimuth);
            sum_az += v.azimuth;
        }
        assert!(min_az >= 150.0 && max_az <= 210.0);
        // std of the mean of U(150, 210) over 1e4 draws is 0.17 deg
        assert!((sum_az / n as f64 - 180.0).abs() < 1.0);
    }

    #[test]
    fn rotation_is_proper_and_looks_along_the_fingers_from_behind() {
        let v = Viewpoint::centered(400.0);
        let r = v.rotation();
        let m = r.matrix();
        assert!((m.determinant() - 1.0).abs() < 1e-12);
        assert!((m * m.transpose() - Matrix3::identity()).norm() < 1e-12);
        // fingers (+y hand) point away from the camera
        let fingers = r * Vector3::y();
        assert!((fingers - Vector3::z()).norm() < 1e-12);
        // looking down: the hand tilts so fingers also move up the image
        let down = Viewpoint { elevation: -30.0, ..v };
        assert!((down.rotation() * Vector3::y()).y < 0.0);
        let (rot, t) = v.placement(&Vector3::new(1.0, 2.0, 3.0));
        let c = rot * Vector3::new(1.0, 2.0, 3.0) + t;
        assert!((c - Vector3::new(0.0, 0.0, 400.0)).norm() < 1e-9);
    }

    #[test]
    fn empty_range_rejected() {
        let prior = ViewpointPrior {
            bank: [10.0, -10.0],
            ..ViewpointPrior::default()
        };
        assert!(prior.validate().is_err());
        assert!(ViewpointPrior::default().validate().is_ok());
    }
}
