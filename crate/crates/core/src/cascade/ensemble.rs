use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::{train_linear, LinearConfig};
use crate::error::{Error, Result};
use crate::features::{region_dot, PartRegion};

/// Shape of the descriptor the classifiers read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub cells_x: usize,
    pub cells_y: usize,
    pub bins: usize,
}

impl GridShape {
    pub fn dim(&self) -> usize {
        self.cells_x * self.cells_y * self.bins + 1
    }
}

/// Thresholded linear template over one part region. Weights live in the full
/// descriptor space and are zero outside the region, except for the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakClassifier {
    pub region: PartRegion,
    pub weights: Vec<f64>,
    pub node: usize,
    pub member: usize,
}

impl WeakClassifier {
    /// A member that fires on every window.
    pub fn always_fire(shape: GridShape, node: usize, member: usize) -> Self {
        let mut weights = vec![0.0; shape.dim()];
        weights[shape.dim() - 1] = 1.0;
        Self {
            region: PartRegion {
                x0: 0,
                y0: 0,
                w: 2.min(shape.cells_x),
                h: 2.min(shape.cells_y),
            },
            weights,
            node,
            member,
        }
    }

    pub fn margin(&self, x: &[f64], shape: GridShape) -> f64 {
        region_dot(&self.weights, x, &self.region, shape.cells_x, shape.bins)
    }

    pub fn fires(&self, x: &[f64], shape: GridShape) -> bool {
        self.margin(x, shape) > 0.0
    }

    pub fn validate(&self, shape: GridShape) -> Result<()> {
        self.region.validate(shape.cells_x, shape.cells_y)?;
        if self.weights.len() != shape.dim() {
            return Err(Error::invalid(format!(
                "node {} member {}: {} weights, expected {}",
                self.node,
                self.member,
                self.weights.len(),
                shape.dim()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid(format!(
                "node {} member {}: non-finite weight",
                self.node, self.member
            )));
        }
        let mut support = vec![false; shape.dim()];
        for i in self.region.indices(shape.cells_x, shape.bins) {
            support[i] = true;
        }
        support[shape.dim() - 1] = true;
        if self.weights.iter().zip(&support).any(|(&w, &s)| w != 0.0 && !s) {
            return Err(Error::invalid(format!(
                "node {} member {}: weight outside its part region",
                self.node, self.member
            )));
        }
        Ok(())
    }
}

/// The pool of weak classifiers at one tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEnsemble {
    pub node: usize,
    pub members: Vec<WeakClassifier>,
    /// Set when the node saw no positives or no negatives and passes everything.
    pub degenerate: bool,
}

impl NodeEnsemble {
    pub fn always_pass(shape: GridShape, node: usize, m: usize) -> Self {
        Self {
            node,
            members: (0..m).map(|j| WeakClassifier::always_fire(shape, node, j)).collect(),
            degenerate: true,
        }
    }

    /// Number of firing members and the sum of all member margins.
    pub fn evaluate(&self, x: &[f64], shape: GridShape) -> (u64, f64) {
        let mut count = 0;
        let mut margin = 0.0;
        for m in &self.members {
            let v = m.margin(x, shape);
            if v > 0.0 {
                count += 1;
            }
            margin += v;
        }
        (count, margin)
    }

    pub fn passes(&self, x: &[f64], shape: GridShape) -> bool {
        self.members.iter().any(|m| m.fires(x, shape))
    }
}

/// Settings for growing one node's ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    /// Members per node.
    pub members: usize,
    /// Smallest and largest part side, cells.
    pub min_part: usize,
    pub max_part: usize,
    /// Fraction of node positives every member must pass.
    pub recall_floor: f64,
    pub linear: LinearConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 3,
            min_part: 2,
            max_part: 5,
            recall_floor: 0.98,
            linear: LinearConfig::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        self.linear.validate()?;
        if self.members == 0 {
            return Err(Error::invalid("need at least one member per node"));
        }
        if self.min_part < 2 || self.max_part < self.min_part {
            return Err(Error::invalid("part sizes must satisfy 2 <= min <= max"));
        }
        if !(0.0..=1.0).contains(&self.recall_floor) {
            return Err(Error::invalid("recall floor must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Every cell-aligned rectangle with sides in `[min, max]` that fits the grid.
pub fn candidate_regions(shape: GridShape, min: usize, max: usize) -> Vec<PartRegion> {
    let mut out = Vec::new();
    for h in min..=max.min(shape.cells_y) {
        for w in min..=max.min(shape.cells_x) {
            for y0 in 0..=shape.cells_y - h {
                for x0 in 0..=shape.cells_x - w {
                    out.push(PartRegion { x0, y0, w, h });
                }
            }
        }
    }
    out
}

fn restrict(x: &[f64], indices: &[usize]) -> Vec<f64> {
    let mut v: Vec<f64> = indices.iter().map(|&i| x[i]).collect();
    v.push(x[x.len() - 1]);
    v
}

/// Bias shift that makes at least `floor` of `margins` strictly positive.
fn calibration_shift(margins: &mut [f64], floor: f64) -> f64 {
    margins.sort_by(f64::total_cmp);
    let n = margins.len();
    let must_pass = ((floor * n as f64).ceil() as usize).clamp(1, n);
    let target = margins[n - must_pass];
    // the smallest margin that must survive maps to a small positive value
    -target + 1e-9 * (1.0 + target.abs())
}

/// Trains one member on a given region and calibrates its bias.
pub fn train_member(
    examples: &[&[f64]],
    positive: &[bool],
    region: PartRegion,
    shape: GridShape,
    cfg: &EnsembleConfig,
    node: usize,
    member: usize,
    seed: u64,
) -> Result<WeakClassifier> {
    region.validate(shape.cells_x, shape.cells_y)?;
    let indices = region.indices(shape.cells_x, shape.bins);
    let sub: Vec<Vec<f64>> = examples.iter().map(|x| restrict(x, &indices)).collect();
    let refs: Vec<&[f64]> = sub.iter().map(Vec::as_slice).collect();
    let labels: Vec<f64> = positive.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
    let fit = train_linear(&refs, &labels, &cfg.linear, seed)?;

    let mut weights = vec![0.0; shape.dim()];
    for (&i, &w) in indices.iter().zip(&fit.weights) {
        weights[i] = w;
    }
    let bias = shape.dim() - 1;
    weights[bias] = fit.weights[indices.len()];
    let mut wc = WeakClassifier {
        region,
        weights,
        node,
        member,
    };
    let mut margins: Vec<f64> = examples
        .iter()
        .zip(positive)
        .filter(|(_, &p)| p)
        .map(|(x, _)| wc.margin(x, shape))
        .collect();
    wc.weights[bias] += calibration_shift(&mut margins, cfg.recall_floor);
    Ok(wc)
}

/// Grows `cfg.members` weak classifiers on random part regions, each trained
/// on all node examples and then shifted to pass `recall_floor` of the
/// positives. Returns an always-pass ensemble when either class is missing.
pub fn train_node_ensemble(
    examples: &[&[f64]],
    positive: &[bool],
    shape: GridShape,
    cfg: &EnsembleConfig,
    node: usize,
    seed: u64,
) -> Result<NodeEnsemble> {
    cfg.validate()?;
    if examples.len() != positive.len() {
        return Err(Error::invalid("examples and positive mask differ in length"));
    }
    if examples.iter().any(|x| x.len() != shape.dim()) {
        return Err(Error::invalid("example dimension does not match the descriptor"));
    }
    let pos = positive.iter().filter(|&&p| p).count();
    if pos == 0 || pos == positive.len() {
        log::warn!(
            "node {node}: {pos} positives and {} negatives; marking it always-pass",
            positive.len() - pos
        );
        return Ok(NodeEnsemble::always_pass(shape, node, cfg.members));
    }
    let regions = candidate_regions(shape, cfg.min_part, cfg.max_part);
    if regions.is_empty() {
        return Err(Error::invalid("no part region fits the descriptor grid"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(PartRegion, u64)> = (0..cfg.members)
        .map(|_| (regions[rng.random_range(0..regions.len())], rng.random()))
        .collect();
    let members = draws
        .into_par_iter()
        .enumerate()
        .map(|(j, (region, s))| train_member(examples, positive, region, shape, cfg, node, j, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(NodeEnsemble {
        node,
        members,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHAPE: GridShape = GridShape {
        cells_x: 5,
        cells_y: 5,
        bins: 4,
    };

    fn toy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut mask = Vec::new();
        for i in 0..n {
            let p = i % 4 == 0;
            let mut x: Vec<f64> = (0..SHAPE.dim() - 1).map(|_| rng.random_range(0.0..1.0)).collect();
            if p {
                x.iter_mut().step_by(3).for_each(|v| *v += 0.5);
            }
            x.push(1.0);
            xs.push(x);
            mask.push(p);
        }
        (xs, mask)
    }

    #[test]
    fn region_enumeration_counts() {
        // sides 2..=5 on a 5x5 grid: (4+3+2+1)^2 rectangles
        assert_eq!(candidate_regions(SHAPE, 2, 5).len(), 100);
        assert!(candidate_regions(SHAPE, 2, 5).iter().all(|r| r.validate(5, 5).is_ok()));
    }

    #[test]
    fn every_member_meets_the_recall_floor() {
        let (xs, mask) = toy(400, 1);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let cfg = EnsembleConfig::default();
        let e = train_node_ensemble(&refs, &mask, SHAPE, &cfg, 0, 5).unwrap();
        assert_eq!(e.members.len(), 3);
        let npos = mask.iter().filter(|&&p| p).count() as f64;
        for m in &e.members {
            m.validate(SHAPE).unwrap();
            let pass = refs.iter().zip(&mask).filter(|(x, &p)| p && m.fires(x, SHAPE)).count();
            assert!(pass as f64 >= 0.98 * npos);
        }
        let pass = refs.iter().zip(&mask).filter(|(x, &p)| p && e.passes(x, SHAPE)).count();
        assert!(pass as f64 >= 0.98 * npos);
    }

    #[test]
    fn single_full_region_member_is_one_linear_fit() {
        let (xs, mask) = toy(200, 2);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let cfg = EnsembleConfig {
            members: 1,
            recall_floor: 0.0,
            ..EnsembleConfig::default()
        };
        let m = train_member(&refs, &mask, PartRegion::full(5), SHAPE, &cfg, 0, 0, 3).unwrap();
        let labels: Vec<f64> = mask.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
        let fit = train_linear(&refs, &labels, &cfg.linear, 3).unwrap();
        let n = SHAPE.dim() - 1;
        assert_eq!(m.weights[..n], fit.weights[..n]);
    }

    #[test]
    fn regions_are_reproducible_from_seed() {
        let (xs, mask) = toy(120, 3);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let cfg = EnsembleConfig::default();
        let a = train_node_ensemble(&refs, &mask, SHAPE, &cfg, 2, 9).unwrap();
        let b = train_node_ensemble(&refs, &mask, SHAPE, &cfg, 2, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_class_gives_always_pass() {
        let (xs, _) = toy(10, 4);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let e = train_node_ensemble(&refs, &[false; 10], SHAPE, &EnsembleConfig::default(), 1, 0).unwrap();
        assert!(e.degenerate);
        assert!(refs.iter().all(|x| e.evaluate(x, SHAPE).0 == 3));
    }

    #[test]
    fn calibration_passes_exactly_the_requested_share() {
        let mut m: Vec<f64> = (0..100).map(|i| i as f64 - 50.0).collect();
        let shift = calibration_shift(&mut m, 0.98);
        assert_eq!(m.iter().filter(|&&v| v + shift > 0.0).count(), 98);
    }
}
