use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::window_depth;
use crate::error::{Error, Result};
use crate::features::{extract, FeatureConfig};
use crate::geometry::{BoundingBox, DepthImage};

/// Settings for fitting a [`PoseRefiner`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefinerConfig {
    /// Shifted windows drawn around each training hand (0 = no refiner).
    pub windows: usize,
    /// Largest shift of a training window from the hand centre, px.
    pub reach: f64,
    /// Ridge penalty.
    pub ridge: f64,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        Self {
            windows: 16,
            reach: 12.0,
            ridge: 1.0,
        }
    }
}

impl RefinerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reach >= 0.0) || !(self.ridge > 0.0) {
            return Err(Error::invalid("refiner reach must be non-negative and ridge positive"));
        }
        Ok(())
    }
}

/// One training window for the refiner: its descriptor, the class of the
/// hand it was drawn around, and the hand's centre offset (in window sides)
/// and log scale relative to the window.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinerExample {
    pub class: usize,
    pub descriptor: Vec<f64>,
    pub target: [f64; 3],
}

/// Per-class ridge regression from a window descriptor to where the hand
/// sits in the window and how large its class template should be drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRefiner {
    /// Per class: weights for the x offset, y offset and log scale.
    pub weights: Vec<[Vec<f64>; 3]>,
}

/// Least-squares scale that best fits `template` (a canonical label) to
/// `keypoints` about `center`.
pub fn template_scale(template: &[f64], keypoints: &[[f64; 2]], center: (f64, f64)) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (t, k) in template.chunks_exact(2).zip(keypoints) {
        num += t[0] * (k[0] - center.0) + t[1] * (k[1] - center.1);
        den += t[0] * t[0] + t[1] * t[1];
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

impl PoseRefiner {
    /// Fits one regression per class. Classes without examples get zero
    /// weights and leave windows unchanged.
    pub fn fit(examples: &[RefinerExample], classes: usize, dim: usize, ridge: f64) -> Result<Self> {
        if !(ridge > 0.0) {
            return Err(Error::invalid("ridge penalty must be positive"));
        }
        if let Some(e) = examples
            .iter()
            .find(|e| e.class >= classes || e.descriptor.len() != dim)
        {
            return Err(Error::invalid(format!(
                "refiner example of class {} with {} values does not fit {classes} classes of dimension {dim}",
                e.class,
                e.descriptor.len()
            )));
        }
        let weights = (0..classes)
            .into_par_iter()
            .map(|c| {
                let own: Vec<&RefinerExample> = examples.iter().filter(|e| e.class == c).collect();
                let zero = || [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
                if own.is_empty() {
                    return Ok(zero());
                }
                let x = DMatrix::from_fn(own.len(), dim, |i, j| own[i].descriptor[j]);
                let t = DMatrix::from_fn(own.len(), 3, |i, j| own[i].target[j]);
                let mut gram = x.transpose() * &x;
                for i in 0..dim {
                    gram[(i, i)] += ridge;
                }
                let w = gram
                    .cholesky()
                    .ok_or_else(|| Error::Internal(format!("refiner system for class {c} is not positive definite")))?
                    .solve(&(x.transpose() * t));
                Ok([0, 1, 2].map(|k| w.column(k).iter().copied().collect()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { weights })
    }

    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self, classes: usize, dim: usize) -> Result<()> {
        if self.weights.len() != classes {
            return Err(Error::invalid(format!(
                "refiner covers {} classes, model has {classes}",
                self.weights.len()
            )));
        }
        if self
            .weights
            .iter()
            .flatten()
            .any(|w| w.len() != dim || w.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::invalid(format!("refiner weights must hold {dim} finite values")));
        }
        Ok(())
    }

    /// Offset (in window sides) and log scale predicted for `class`.
    pub fn predict(&self, class: usize, descriptor: &[f64]) -> [f64; 3] {
        let x = DVector::from_column_slice(descriptor);
        self.weights[class]
            .each_ref()
            .map(|w| DVector::from_column_slice(w).dot(&x))
    }

    /// Moves `window` towards the hand `iterations` times, re-describing it
    /// at each new position. Returns the moved window (same side) and the
    /// side at which the class template should be drawn.
    pub fn refine(
        &self,
        filtered: &DepthImage,
        window: BoundingBox,
        depth: f64,
        class: usize,
        feature: &FeatureConfig,
        iterations: usize,
        max_range: f64,
    ) -> Result<(BoundingBox, f64)> {
        let mut w = window;
        let mut d = depth;
        let mut scale = 1.0;
        for _ in 0..iterations {
            let x = extract(filtered, &w, d, feature)?;
            let [ox, oy, ls] = self.predict(class, &x.values);
            let (cx, cy) = w.center();
            w = BoundingBox::square(cx + ox * w.w, cy + oy * w.h, w.w);
            scale = ls.clamp(-1.0, 1.0).exp();
            let (cx, cy) = w.center();
            d = window_depth(filtered, cx, cy, max_range, 0).unwrap_or(d);
        }
        Ok((w, w.w * scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_a_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dim = 6;
        let truth = [
            [0.5, -1.0, 0.0, 2.0, 0.1, 0.3],
            [0.0, 0.2, 1.0, -0.5, 0.0, -0.1],
            [0.1; 6],
        ];
        let examples: Vec<RefinerExample> = (0..400)
            .map(|_| {
                let mut x: Vec<f64> = (0..dim - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
                x.push(1.0);
                let target = truth.map(|w| w.iter().zip(&x).map(|(a, b)| a * b).sum());
                RefinerExample {
                    class: 1,
                    descriptor: x,
                    target,
                }
            })
            .collect();
        let r = PoseRefiner::fit(&examples, 2, dim, 1e-6).unwrap();
        for (k, w) in r.weights[1].iter().enumerate() {
            for (a, b) in w.iter().zip(&truth[k]) {
                assert!((a - b).abs() < 1e-4, "{a} vs {b}");
            }
        }
        assert!(r.weights[0].iter().flatten().all(|&v| v == 0.0));
        r.validate(2, dim).unwrap();
        assert!(r.validate(3, dim).is_err());
    }

    #[test]
    fn rejects_mismatched_examples() {
        let e = RefinerExample {
            class: 2,
            descriptor: vec![1.0; 3],
            target: [0.0; 3],
        };
        assert!(PoseRefiner::fit(std::slice::from_ref(&e), 2, 3, 1.0).is_err());
        assert!(PoseRefiner::fit(&[e], 3, 4, 1.0).is_err());
    }

    #[test]
    fn template_scale_inverts_drawing() {
        let t = [0.1, -0.2, -0.3, 0.05, 0.2, 0.2];
        let kp: Vec<[f64; 2]> = t.chunks(2).map(|p| [10.0 + 40.0 * p[0], 20.0 + 40.0 * p[1]]).collect();
        assert!((template_scale(&t, &kp, (10.0, 20.0)) - 40.0).abs() < 1e-9);
    }
}
