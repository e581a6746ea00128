use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{HandPose, HandShape, POSE_DOF};

/// Default noise scales: wrist translation, wrist rotation, finger articulation.
pub const WRIST_TRANSLATION_SIGMA_MM: f64 = 30.0;
pub const WRIST_ROTATION_SIGMA: f64 = 0.15;
pub const FINGER_SIGMA: f64 = 0.05;

/// Per-element Gaussian noise scales for pose proposals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Standard deviation per pose element (mm for translations, rad otherwise).
    pub sigma: [f64; POSE_DOF],
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        let mut sigma = [FINGER_SIGMA; POSE_DOF];
        sigma[..3].fill(WRIST_TRANSLATION_SIGMA_MM);
        sigma[3..6].fill(WRIST_ROTATION_SIGMA);
        Self { sigma, seed: 0 }
    }
}

impl PerturbationConfig {
    pub fn zero() -> Self {
        Self {
            sigma: [0.0; POSE_DOF],
            seed: 0,
        }
    }

    /// Multiplies every sigma by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.sigma.iter_mut().for_each(|s| *s *= factor);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.sigma.iter().position(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma[{i}] = {} must be finite and non-negative",
                self.sigma[i]
            )));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Adds independent `N(0, sigma_i^2)` noise to every pose element, then clamps
/// articulation angles into the shape's joint limits. Draws exactly 26 normals
/// per call, even where sigma is zero, so streams stay aligned.
pub fn perturb_pose<R: Rng + ?Sized>(
    base: &HandPose,
    cfg: &PerturbationConfig,
    shape: &HandShape,
    rng: &mut R,
) -> HandPose {
    let mut out = *base;
    for (i, value) in out.theta.iter_mut().enumerate() {
        let eps: f64 = StandardNormal.sample(rng);
        *value += cfg.sigma[i] * eps;
    }
    shape.clamp(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GLOBAL_DOF;

    #[test]
    fn zero_sigma_is_identity() {
        let shape = HandShape::default();
        let mut base = HandPose::default();
        base.theta[11] = 0.4;
        base.theta[0] = 12.5;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = perturb_pose(&base, &PerturbationConfig::zero(), &shape, &mut rng);
        assert_eq!(out, base);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let shape = HandShape::default();
        let base = HandPose::default();
        let cfg = PerturbationConfig {
            seed: 99,
            ..PerturbationConfig::default()
        };
        let a = perturb_pose(&base, &cfg, &shape, &mut cfg.rng());
        let b = perturb_pose(&base, &cfg, &shape, &mut cfg.rng());
        let bytes = |p: &HandPose| p.theta.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>();
        assert_eq!(bytes(&a), bytes(&b));
    }

    #[test]
    fn clamps_into_limits() {
        let shape = HandShape::default();
        let cfg = PerturbationConfig::default().scaled(40.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let p = perturb_pose(&HandPose::default(), &cfg, &shape, &mut rng);
            crate::geometry::validate_pose(&p, &shape).unwrap();
        }
    }

    #[test]
    fn single_joint_noise_has_the_requested_moments() {
        let mut shape = HandShape::default();
        shape.fingers[1].limits[1] = [-10.0, 10.0];
        let mut base = HandPose::default();
        base.theta[11] = 0.4;
        let mut cfg = PerturbationConfig::zero();
        cfg.sigma[11] = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| perturb_pose(&base, &cfg, &shape, &mut rng).theta[11])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // standard error of the mean is 0.001; 0.005 is a 5-sigma bound
        assert!((mean - 0.4).abs() < 0.005, "mean {mean}");
        assert!((var.sqrt() - 0.1).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn negative_sigma_rejected() {
        let mut cfg = PerturbationConfig::default();
        cfg.sigma[7] = -0.1;
        assert!(cfg.validate().is_err());
        assert!(PerturbationConfig::default().validate().is_ok());
        assert_eq!(PerturbationConfig::default().sigma[GLOBAL_DOF], FINGER_SIGMA);
    }
}
