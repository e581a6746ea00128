use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::kmeans::PoseClass;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
    /// Pose classes at or below this node, ascending.
    pub classes: Vec<usize>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Coarse-to-fine hierarchy over pose classes. Node ids follow breadth-first
/// order; node 0 is the root. Every leaf holds exactly one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseTree {
    pub nodes: Vec<TreeNode>,
}

/// One agglomeration step: clusters `a` and `b` (sorted class lists) joined at
/// average-linkage distance `height`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub height: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Average-linkage agglomeration of class centroids (Euclidean). Among equal
/// distances the pair with the smallest member class ids merges first.
pub fn average_linkage(classes: &[PoseClass]) -> Vec<Merge> {
    let k = classes.len();
    let pair: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| dist(&classes[i].centroid, &classes[j].centroid))
                .collect()
        })
        .collect();
    let mut clusters: Vec<Vec<usize>> = (0..k).map(|i| vec![classes[i].id]).collect();
    let index_of = |id: usize| classes.iter().position(|c| c.id == id).expect("known id");
    let mut merges = Vec::with_capacity(k.saturating_sub(1));
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let mut total = 0.0;
                for &a in &clusters[i] {
                    for &b in &clusters[j] {
                        total += pair[index_of(a)][index_of(b)];
                    }
                }
                let d = total / (clusters[i].len() * clusters[j].len()) as f64;
                let key = |x: usize, y: usize| {
                    let (p, q) = (clusters[x][0], clusters[y][0]);
                    (p.min(q), p.max(q))
                };
                let better = match best {
                    None => true,
                    Some((bd, bi, bj)) => d < bd || (d == bd && key(i, j) < key(bi, bj)),
                };
                if better {
                    best = Some((d, i, j));
                }
            }
        }
        let (height, i, j) = best.expect("at least two clusters");
        let b = clusters.remove(j);
        let a = std::mem::take(&mut clusters[i]);
        merges.push(Merge {
            a: a.clone(),
            b: b.clone(),
            height,
        });
        let mut joined = a;
        joined.extend(b);
        joined.sort_unstable();
        clusters[i] = joined;
        clusters.sort_by_key(|c| c[0]);
    }
    merges
}

/// Partition of the class ids after applying the first `m` merges.
fn partition(ids: &[usize], merges: &[Merge], m: usize) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = ids.iter().map(|&i| vec![i]).collect();
    for merge in &merges[..m] {
        let ia = clusters.iter().position(|c| *c == merge.a).expect("cluster a");
        let a = clusters.remove(ia);
        let ib = clusters.iter().position(|c| *c == merge.b).expect("cluster b");
        let b = clusters.remove(ib);
        let mut joined = a;
        joined.extend(b);
        joined.sort_unstable();
        clusters.push(joined);
    }
    clusters.sort_by_key(|c| c[0]);
    clusters
}

/// Builds an `levels`-level tree: the root holds every class, the last level
/// holds single classes, and interior level `l` is the partition after the
/// first `ceil((1 - l/(levels-1)) * (K-1))` merges (a nearest-rank cut of the
/// merge heights). Clusters that do not split between levels become chains,
/// so every leaf sits at depth `levels - 1`. A single class yields a root with
/// one leaf.
pub fn build_hierarchy(classes: &[PoseClass], levels: usize) -> Result<PoseTree> {
    if levels < 2 {
        return Err(Error::invalid("a hierarchy needs at least 2 levels"));
    }
    if classes.is_empty() {
        return Err(Error::invalid("no pose classes"));
    }
    let mut ids: Vec<usize> = classes.iter().map(|c| c.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("duplicate pose class ids"));
    }
    let k = ids.len();
    let levels = if k == 1 { 2 } else { levels };
    let merges = average_linkage(classes);
    let n_merges = k - 1;

    let level_partitions: Vec<Vec<Vec<usize>>> = (0..levels)
        .map(|l| {
            let frac = 1.0 - l as f64 / (levels - 1) as f64;
            let m = ((frac * n_merges as f64) - 1e-12).ceil().max(0.0) as usize;
            partition(&ids, &merges, m.min(n_merges))
        })
        .collect();

    // breadth-first numbering, children ordered by smallest class id
    let mut nodes = vec![TreeNode {
        id: 0,
        parent: None,
        children: Vec::new(),
        depth: 0,
        classes: ids.clone(),
    }];
    let mut queue = VecDeque::from([0usize]);
    while let Some(n) = queue.pop_front() {
        let depth = nodes[n].depth;
        if depth + 1 == levels {
            continue;
        }
        let parent_classes = nodes[n].classes.clone();
        let kids: Vec<Vec<usize>> = level_partitions[depth + 1]
            .iter()
            .filter(|c| c.iter().all(|id| parent_classes.binary_search(id).is_ok()))
            .cloned()
            .collect();
        for classes in kids {
            let id = nodes.len();
            nodes.push(TreeNode {
                id,
                parent: Some(n),
                children: Vec::new(),
                depth: depth + 1,
                classes,
            });
            nodes[n].children.push(id);
            queue.push_back(id);
        }
    }
    let tree = PoseTree { nodes };
    tree.validate()?;
    Ok(tree)
}

impl PoseTree {
    /// Rebuilds a tree from a parent array (root has `None`) and the class of
    /// every leaf, as stored in model files.
    pub fn from_parents(parents: &[Option<usize>], leaf_classes: &[Option<usize>]) -> Result<Self> {
        if parents.is_empty() || parents.len() != leaf_classes.len() {
            return Err(Error::invalid(
                "parent and leaf-class arrays must be non-empty and equal length",
            ));
        }
        let mut nodes: Vec<TreeNode> = (0..parents.len())
            .map(|id| TreeNode {
                id,
                parent: parents[id],
                children: Vec::new(),
                depth: 0,
                classes: Vec::new(),
            })
            .collect();
        for (id, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= id {
                    return Err(Error::invalid(format!("node {id}: parent {p} must precede it")));
                }
                nodes[p].children.push(id);
            } else if id != 0 {
                return Err(Error::invalid(format!("node {id} has no parent; only the root may")));
            }
        }
        for id in 1..nodes.len() {
            let p = nodes[id].parent.expect("checked");
            nodes[id].depth = nodes[p].depth + 1;
        }
        for id in (0..nodes.len()).rev() {
            if nodes[id].children.is_empty() {
                let c = leaf_classes[id].ok_or_else(|| Error::invalid(format!("leaf {id} has no class")))?;
                nodes[id].classes = vec![c];
            } else if leaf_classes[id].is_some() {
                return Err(Error::invalid(format!("interior node {id} carries a leaf class")));
            }
            if let Some(p) = nodes[id].parent {
                let mine = nodes[id].classes.clone();
                nodes[p].classes.extend(mine);
            }
        }
        for n in &mut nodes {
            n.classes.sort_unstable();
        }
        let tree = Self { nodes };
        tree.validate()?;
        Ok(tree)
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        self.nodes.iter().map(|n| n.parent).collect()
    }

    /// Class of each node if it is a leaf.
    pub fn leaf_classes(&self) -> Vec<Option<usize>> {
        self.nodes.iter().map(|n| n.is_leaf().then(|| n.classes[0])).collect()
    }

    /// Leaf node ids in ascending order.
    pub fn leaves(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id).collect()
    }

    /// Leaf node holding `class`.
    pub fn leaf_of_class(&self, class: usize) -> Option<usize> {
        self.nodes
            .iter()
            .find(|n| n.is_leaf() && n.classes[0] == class)
            .map(|n| n.id)
    }

    /// Number of levels (deepest depth + 1).
    pub fn levels(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0) + 1
    }

    /// Path from the root to `node`, both included.
    pub fn ancestors(&self, node: usize) -> Result<Vec<usize>> {
        if node >= self.nodes.len() {
            return Err(Error::invalid(format!("unknown node {node}")));
        }
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Ok(path)
    }

    /// Structural checks: single root first, parents precede children, ids
    /// are positions, and every class appears in exactly one leaf.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() || self.nodes[0].parent.is_some() {
            return Err(Error::invalid("tree must start with its root"));
        }
        let mut leaf_classes = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::invalid(format!("node at {i} has id {}", n.id)));
            }
            if i > 0 && n.parent.is_none_or(|p| p >= i) {
                return Err(Error::invalid(format!("node {i} has a bad parent")));
            }
            for &c in &n.children {
                if self.nodes.get(c).and_then(|x| x.parent) != Some(i) {
                    return Err(Error::invalid(format!("child link {i} -> {c} is not mirrored")));
                }
            }
            if n.is_leaf() {
                if n.classes.len() != 1 {
                    return Err(Error::invalid(format!("leaf {i} must hold exactly one class")));
                }
                leaf_classes.push(n.classes[0]);
            }
        }
        let count = leaf_classes.len();
        leaf_classes.sort_unstable();
        leaf_classes.dedup();
        if leaf_classes.len() != count {
            return Err(Error::invalid("a class appears in more than one leaf"));
        }
        Ok(())
    }

    /// Mean of the centroids of the classes under `node`.
    pub fn node_mean_label(&self, node: usize, classes: &[PoseClass]) -> Result<Vec<f64>> {
        let n = self
            .nodes
            .get(node)
            .ok_or_else(|| Error::invalid(format!("unknown node {node}")))?;
        let cents: Vec<&PoseClass> = n
            .classes
            .iter()
            .map(|&c| {
                classes
                    .iter()
                    .find(|p| p.id == c)
                    .ok_or_else(|| Error::invalid(format!("class {c} missing")))
            })
            .collect::<Result<_>>()?;
        let dim = cents[0].centroid.len();
        let mut mean = vec![0.0; dim];
        for c in &cents {
            for (m, v) in mean.iter_mut().zip(&c.centroid) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= cents.len() as f64);
        Ok(mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn class(id: usize, centroid: Vec<f64>) -> PoseClass {
        PoseClass {
            id,
            centroid,
            members: vec![id],
            template: Vec::new(),
        }
    }

    fn random_classes(k: usize, seed: u64) -> Vec<PoseClass> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k)
            .map(|i| class(i, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect()
    }

    #[test]
    fn single_class_gives_root_and_leaf() {
        let t = build_hierarchy(&[class(0, vec![0.0, 0.0])], 6).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.leaves(), vec![1]);
        assert_eq!(t.ancestors(1).unwrap(), vec![0, 1]);
    }

    #[test]
    fn rectangle_short_edges_merge_first() {
        // width 10, height 1: pairs {0,1} and {2,3} share short edges
        let cs = vec![
            class(0, vec![0.0, 0.0]),
            class(1, vec![0.0, 1.0]),
            class(2, vec![10.0, 0.0]),
            class(3, vec![10.0, 1.0]),
        ];
        let merges = average_linkage(&cs);
        assert_eq!(merges[0].a, vec![0]);
        assert_eq!(merges[0].b, vec![1]);
        assert_eq!(merges[1].a, vec![2]);
        assert_eq!(merges[1].b, vec![3]);
        // hand-computed average linkage between {0,1} and {2,3}
        let expected = (10.0 + 101f64.sqrt() * 2.0 + 10.0) / 4.0;
        assert!((merges[2].height - expected).abs() < 1e-12);

        let t = build_hierarchy(&cs, 3).unwrap();
        assert_eq!(t.nodes[0].children, vec![1, 2]);
        assert_eq!(t.nodes[1].classes, vec![0, 1]);
        assert_eq!(t.nodes[2].classes, vec![2, 3]);
        assert_eq!(t.leaves().len(), 4);
    }

    #[test]
    fn structure_for_random_centroids() {
        for seed in 0..20 {
            let k = 1 + (seed as usize * 7) % 23;
            let levels = 2 + seed as usize % 5;
            let cs = random_classes(k, seed);
            let t = build_hierarchy(&cs, levels).unwrap();
            let leaves = t.leaves();
            assert_eq!(leaves.len(), k);
            let mut covered = vec![false; t.len()];
            for &l in &leaves {
                let path = t.ancestors(l).unwrap();
                assert_eq!(path[0], 0);
                assert_eq!(path.len(), t.levels());
                for n in path {
                    covered[n] = true;
                }
            }
            assert!(covered.iter().all(|&c| c), "seed {seed}");
            let rebuilt = PoseTree::from_parents(&t.parents(), &t.leaf_classes()).unwrap();
            assert_eq!(rebuilt, t);
        }
    }

    #[test]
    fn node_mean_is_mean_of_leaf_centroids() {
        let cs = random_classes(9, 4);
        let t = build_hierarchy(&cs, 4).unwrap();
        for n in &t.nodes {
            let mean = t.node_mean_label(n.id, &cs).unwrap();
            let leaves: Vec<usize> = t
                .leaves()
                .into_iter()
                .filter(|&l| t.ancestors(l).unwrap().contains(&n.id))
                .collect();
            for d in 0..6 {
                let m = leaves
                    .iter()
                    .map(|&l| cs[t.nodes[l].classes[0]].centroid[d])
                    .sum::<f64>()
                    / leaves.len() as f64;
                assert!((m - mean[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ancestors_of_unknown_node_fail() {
        let t = PoseTree::from_parents(&[None], &[Some(0)]).unwrap();
        assert_eq!(t.ancestors(0).unwrap(), vec![0]);
        assert!(t.ancestors(1).is_err());
    }

    #[test]
    fn rejects_malformed_parent_arrays() {
        assert!(PoseTree::from_parents(&[None, Some(2), Some(0)], &[None, Some(0), Some(1)]).is_err());
        assert!(PoseTree::from_parents(&[None, None], &[Some(0), Some(1)]).is_err());
        assert!(PoseTree::from_parents(&[None, Some(0), Some(0)], &[None, Some(1), Some(1)]).is_err());
    }
}
