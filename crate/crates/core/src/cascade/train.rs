use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{train_node_ensemble, EnsembleConfig, GridShape, NodeEnsemble};
use crate::error::{Error, Result};
use crate::pose_tree::PoseTree;

/// Descriptors with their pose class (`None` for background windows).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub features: Vec<Vec<f64>>,
    pub classes: Vec<Option<usize>>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn push(&mut self, x: Vec<f64>, class: Option<usize>) {
        self.features.push(x);
        self.classes.push(class);
    }
}

/// What one node saw during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: usize,
    pub depth: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Fractions of the node's positives and negatives that its ensemble passes.
    pub positive_pass_rate: f64,
    pub negative_pass_rate: f64,
    pub degenerate: bool,
    /// Indices into the training set that reached the node.
    #[serde(skip)]
    pub examples: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub nodes: Vec<NodeReport>,
    pub degenerate_nodes: Vec<usize>,
    /// Per class: positives that reach their own leaf, out of all.
    pub leaf_recall: Vec<(usize, usize)>,
}

/// Mixes a node id into the run seed.
pub fn node_seed(seed: u64, node: usize) -> u64 {
    let mut z = seed ^ (node as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rate(hit: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Trains the node ensembles top-down. Each node learns its own classes
/// against everything else that reached it; only windows passed by at least
/// one member are handed to the children. Nodes on one level train in
/// parallel.
pub fn train_sequential(
    tree: &PoseTree,
    set: &TrainingSet,
    shape: GridShape,
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<(Vec<NodeEnsemble>, TrainingReport)> {
    cfg.validate()?;
    tree.validate()?;
    if set.features.len() != set.classes.len() {
        return Err(Error::invalid("features and classes differ in length"));
    }
    if set.features.iter().any(|x| x.len() != shape.dim()) {
        return Err(Error::invalid("descriptor dimension does not match the feature grid"));
    }
    for leaf in tree.leaves() {
        let c = tree.nodes[leaf].classes[0];
        if !set.classes.contains(&Some(c)) {
            return Err(Error::invalid(format!("class {c} has no training window")));
        }
    }

    let n = tree.len();
    let mut reaching: Vec<Option<Vec<usize>>> = vec![None; n];
    reaching[tree.root()] = Some((0..set.len()).collect());
    let mut ensembles: Vec<Option<NodeEnsemble>> = vec![None; n];
    let mut reports: Vec<Option<NodeReport>> = vec![None; n];

    for depth in 0..tree.levels() {
        let level: Vec<usize> = tree.nodes.iter().filter(|t| t.depth == depth).map(|t| t.id).collect();
        let trained = level
            .par_iter()
            .map(|&i| {
                let examples = reaching[i].clone().expect("parent processed first");
                let classes = &tree.nodes[i].classes;
                let xs: Vec<&[f64]> = examples.iter().map(|&e| set.features[e].as_slice()).collect();
                let positive: Vec<bool> = examples
                    .iter()
                    .map(|&e| set.classes[e].is_some_and(|c| classes.binary_search(&c).is_ok()))
                    .collect();
                let ensemble = train_node_ensemble(&xs, &positive, shape, cfg, i, node_seed(seed, i))?;
                let passed: Vec<bool> = xs.par_iter().map(|x| ensemble.passes(x, shape)).collect();
                let pos = positive.iter().filter(|&&p| p).count();
                let pos_pass = positive.iter().zip(&passed).filter(|(&p, &k)| p && k).count();
                let neg_pass = positive.iter().zip(&passed).filter(|(&p, &k)| !p && k).count();
                let forward: Vec<usize> = examples
                    .iter()
                    .zip(&passed)
                    .filter(|(_, &k)| k)
                    .map(|(&e, _)| e)
                    .collect();
                let report = NodeReport {
                    node: i,
                    depth,
                    positives: pos,
                    negatives: examples.len() - pos,
                    positive_pass_rate: rate(pos_pass, pos),
                    negative_pass_rate: rate(neg_pass, examples.len() - pos),
                    degenerate: ensemble.degenerate,
                    examples,
                };
                log::info!(
                    "node {i} (depth {depth}): {} pos / {} neg, pass rates {:.3} / {:.3}{}",
                    report.positives,
                    report.negatives,
                    report.positive_pass_rate,
                    report.negative_pass_rate,
                    if report.degenerate { ", degenerate" } else { "" }
                );
                Ok((i, ensemble, report, forward))
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, ensemble, report, forward) in trained {
            for &c in &tree.nodes[i].children {
                reaching[c] = Some(forward.clone());
            }
            ensembles[i] = Some(ensemble);
            reports[i] = Some(report);
        }
    }

    let ensembles: Vec<NodeEnsemble> = ensembles.into_iter().map(|e| e.expect("every node trained")).collect();
    let nodes: Vec<NodeReport> = reports.into_iter().map(|r| r.expect("every node trained")).collect();
    let degenerate_nodes = nodes.iter().filter(|r| r.degenerate).map(|r| r.node).collect();
    let mut leaf_recall = Vec::new();
    let mut classes: Vec<usize> = tree.leaves().iter().map(|&l| tree.nodes[l].classes[0]).collect();
    classes.sort_unstable();
    for c in classes {
        let leaf = tree.leaf_of_class(c).expect("leaf exists");
        let total = set.classes.iter().filter(|&&k| k == Some(c)).count();
        let reached = nodes[leaf]
            .examples
            .iter()
            .filter(|&&e| set.classes[e] == Some(c) && ensembles[leaf].passes(&set.features[e], shape))
            .count();
        leaf_recall.push((reached, total));
    }
    Ok((
        ensembles,
        TrainingReport {
            nodes,
            degenerate_nodes,
            leaf_recall,
        },
    ))
}

/// Counts (node, example) pairs in the report where the example would have
/// been rejected by some strict ancestor of the node.
pub fn audit_filtration(
    tree: &PoseTree,
    ensembles: &[NodeEnsemble],
    set: &TrainingSet,
    report: &TrainingReport,
    shape: GridShape,
) -> Result<usize> {
    let mut violations = 0;
    for r in &report.nodes {
        let path = tree.ancestors(r.node)?;
        let strict = &path[..path.len() - 1];
        violations += r
            .examples
            .par_iter()
            .filter(|&&e| !strict.iter().all(|&a| ensembles[a].passes(&set.features[e], shape)))
            .count();
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::LinearConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SHAPE: GridShape = GridShape {
        cells_x: 5,
        cells_y: 5,
        bins: 4,
    };

    /// Four classes under two interior nodes.
    fn tree() -> PoseTree {
        PoseTree::from_parents(
            &[None, Some(0), Some(0), Some(1), Some(1), Some(2), Some(2)],
            &[None, None, None, Some(0), Some(1), Some(2), Some(3)],
        )
        .unwrap()
    }

    /// Class c lights up cell row c; background lights nothing in particular.
    fn one_hot(per_class: usize, negatives: usize, seed: u64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = TrainingSet::default();
        let noise = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut x: Vec<f64> = (0..SHAPE.dim() - 1).map(|_| rng.random_range(0.0..0.05)).collect();
            x.push(1.0);
            x
        };
        for c in 0..4 {
            for _ in 0..per_class {
                let mut x = noise(&mut rng);
                for cx in 0..5 {
                    for b in 0..4 {
                        x[(c * 5 + cx) * 4 + b] = 1.0;
                    }
                }
                set.push(x, Some(c));
            }
        }
        for _ in 0..negatives {
            set.push(noise(&mut rng), None);
        }
        set
    }

    fn cfg() -> EnsembleConfig {
        EnsembleConfig {
            // full-width rows must be visible to every member
            min_part: 5,
            max_part: 5,
            linear: LinearConfig {
                lambda: 1e-3,
                epochs: 20,
                balance: true,
            },
            ..EnsembleConfig::default()
        }
    }

    #[test]
    fn separable_classes_reach_their_leaves() {
        let t = tree();
        let set = one_hot(30, 60, 1);
        let (ens, report) = train_sequential(&t, &set, SHAPE, &cfg(), 4).unwrap();
        for (reached, total) in &report.leaf_recall {
            assert_eq!(reached, total);
        }
        assert_eq!(audit_filtration(&t, &ens, &set, &report, SHAPE).unwrap(), 0);
        assert!(report.degenerate_nodes.is_empty());
        assert_eq!(report.nodes[0].positives, 120);
        assert_eq!(report.nodes[0].negatives, 60);
    }

    #[test]
    fn root_only_tree_is_hand_versus_background() {
        let t = PoseTree::from_parents(&[None], &[Some(0)]).unwrap();
        let mut set = one_hot(20, 40, 2);
        for c in set.classes.iter_mut().flatten() {
            *c = 0;
        }
        let (ens, report) = train_sequential(&t, &set, SHAPE, &cfg(), 0).unwrap();
        assert_eq!(ens.len(), 1);
        assert_eq!(report.nodes[0].positives, 80);
        assert!(report.nodes[0].positive_pass_rate >= 0.98);
    }

    #[test]
    fn node_without_negatives_becomes_degenerate() {
        let t = tree();
        let set = one_hot(10, 0, 3);
        let (ens, report) = train_sequential(&t, &set, SHAPE, &cfg(), 1).unwrap();
        assert_eq!(report.degenerate_nodes, vec![0]);
        assert!(set.features.iter().all(|x| ens[0].passes(x, SHAPE)));
        assert!(!ens[1].degenerate);
        assert_eq!(audit_filtration(&t, &ens, &set, &report, SHAPE).unwrap(), 0);
    }

    #[test]
    fn missing_class_window_is_rejected() {
        let t = tree();
        let mut set = one_hot(5, 5, 4);
        set.classes.iter_mut().for_each(|c| {
            if *c == Some(3) {
                *c = None;
            }
        });
        assert!(train_sequential(&t, &set, SHAPE, &cfg(), 0).is_err());
    }

    #[test]
    fn training_is_reproducible() {
        let t = tree();
        let set = one_hot(10, 20, 5);
        let a = train_sequential(&t, &set, SHAPE, &cfg(), 8).unwrap();
        let b = train_sequential(&t, &set, SHAPE, &cfg(), 8).unwrap();
        assert_eq!(a, b);
    }
}
