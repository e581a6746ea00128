//! Random well-formed models for property tests and benchmarks.

use rand::Rng;

use super::ensemble::{candidate_regions, NodeEnsemble, WeakClassifier};
use super::model::CascadeModel;
use crate::detect::ScanConfig;
use crate::features::FeatureConfig;
use crate::geometry::PinholeCamera;
use crate::pose_tree::PoseTree;
use crate::synth::LABEL_DIM;

/// Small descriptor (5x5 cells, 4 bins) used by [`random_model`].
pub fn small_features() -> FeatureConfig {
    FeatureConfig {
        bins: 4,
        ..FeatureConfig::default()
    }
}

/// A random tree of `nodes` nodes with `members` random weak classifiers per
/// node. Weights are uniform in `[-1, 1]` so that, on descriptors drawn from
/// the same range, members fire about half the time.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, nodes: usize, members: usize) -> CascadeModel {
    let mut parents = vec![None];
    for i in 1..nodes {
        parents.push(Some(rng.random_range(0..i)));
    }
    let mut has_child = vec![false; nodes];
    for p in parents.iter().flatten() {
        has_child[*p] = true;
    }
    let mut next = 0;
    let leaf_classes: Vec<Option<usize>> = has_child
        .iter()
        .map(|&c| {
            (!c).then(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    let tree = PoseTree::from_parents(&parents, &leaf_classes).expect("valid random tree");
    let feature = small_features();
    let mut model = CascadeModel {
        tree,
        ensembles: Vec::new(),
        feature,
        templates: vec![vec![0.0; LABEL_DIM]; next],
        camera: PinholeCamera::default(),
        scan: ScanConfig::default(),
        refiner: None,
        training: serde_json::Value::Null,
    };
    let shape = model.shape();
    let regions = candidate_regions(shape, 2, 5);
    model.ensembles = (0..nodes)
        .map(|node| NodeEnsemble {
            node,
            degenerate: false,
            members: (0..members)
                .map(|member| {
                    let region = regions[rng.random_range(0..regions.len())];
                    let mut weights = vec![0.0; shape.dim()];
                    for i in region.indices(shape.cells_x, shape.bins) {
                        weights[i] = rng.random_range(-1.0..1.0);
                    }
                    weights[shape.dim() - 1] = rng.random_range(-1.0..1.0);
                    WeakClassifier {
                        region,
                        weights,
                        node,
                        member,
                    }
                })
                .collect(),
        })
        .collect();
    model
}

/// A descriptor with entries uniform in `[-1, 1]` and the bias set.
pub fn random_descriptor<R: Rng + ?Sized>(rng: &mut R, model: &CascadeModel) -> Vec<f64> {
    let d = model.shape().dim();
    let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    x[d - 1] = 1.0;
    x
}
