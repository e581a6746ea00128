use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::CascadeModel;
use crate::error::{Error, Result};

/// Default cap on explicitly enumerated instantiations.
pub const ENUMERATION_CAP: u128 = 1 << 20;

/// Votes and margin sums per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    /// Indexed by class id.
    pub votes: Vec<u64>,
    /// Sum of every member margin along each voting leaf's path.
    pub margins: Vec<f64>,
    /// Nodes dequeued during the search.
    pub visited: usize,
}

/// One class in ranking order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedClass {
    pub class: usize,
    pub votes: u64,
    pub margin: f64,
}

impl VoteResult {
    fn empty(classes: usize) -> Self {
        Self {
            votes: vec![0; classes],
            margins: vec![0.0; classes],
            visited: 0,
        }
    }

    /// Classes with at least one vote: most votes first, then larger margin,
    /// then smaller class id.
    pub fn ranked(&self) -> Vec<RankedClass> {
        let mut out: Vec<RankedClass> = self
            .votes
            .iter()
            .zip(&self.margins)
            .enumerate()
            .filter(|(_, (&v, _))| v > 0)
            .map(|(class, (&votes, &margin))| RankedClass { class, votes, margin })
            .collect();
        out.sort_by(rank_order);
        out
    }
}

/// Ranking comparator shared by classification and detection.
pub fn rank_order(a: &RankedClass, b: &RankedClass) -> std::cmp::Ordering {
    b.votes
        .cmp(&a.votes)
        .then(b.margin.total_cmp(&a.margin))
        .then(a.class.cmp(&b.class))
}

fn leaf_class(model: &CascadeModel, node: usize) -> usize {
    model.tree.nodes[node].classes[0]
}

/// Breadth-first evaluation of one cascade instantiation: `choice[i]` picks
/// the member used at node `i`. Returns a 0/1 vote per class.
pub fn classify_single(x: &[f64], model: &CascadeModel, choice: &[usize]) -> Result<Vec<u8>> {
    if choice.len() != model.tree.len() {
        return Err(Error::invalid(format!(
            "instantiation has {} entries for {} nodes",
            choice.len(),
            model.tree.len()
        )));
    }
    for (i, &j) in choice.iter().enumerate() {
        if j >= model.ensembles[i].members.len() {
            return Err(Error::invalid(format!("node {i} has no member {j}")));
        }
    }
    let shape = model.shape();
    let mut votes = vec![0u8; model.classes()];
    let mut queue = VecDeque::from([model.tree.root()]);
    while let Some(i) = queue.pop_front() {
        if model.ensembles[i].members[choice[i]].fires(x, shape) {
            let node = &model.tree.nodes[i];
            if node.is_leaf() {
                votes[leaf_class(model, i)] = 1;
            } else {
                queue.extend(node.children.iter().copied());
            }
        }
    }
    Ok(votes)
}

/// Votes of every class under all `M^|V|` instantiations at once: the search
/// carries the running product of firing-member counts down the tree and
/// stops wherever it reaches zero.
pub fn classify_ensemble(x: &[f64], model: &CascadeModel) -> VoteResult {
    let shape = model.shape();
    let mut out = VoteResult::empty(model.classes());
    let mut queue = VecDeque::from([(model.tree.root(), 1u64, 0.0f64)]);
    while let Some((i, t, margin)) = queue.pop_front() {
        out.visited += 1;
        let (count, m) = model.ensembles[i].evaluate(x, shape);
        let t = t * count;
        if t == 0 {
            continue;
        }
        let margin = margin + m;
        let node = &model.tree.nodes[i];
        if node.is_leaf() {
            let c = leaf_class(model, i);
            out.votes[c] = t;
            out.margins[c] = margin;
        } else {
            queue.extend(node.children.iter().map(|&c| (c, t, margin)));
        }
    }
    out
}

/// Which instantiations the explicit oracle sums over.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleMode {
    /// Every instantiation, refusing when there are more than `cap`.
    Enumerate { cap: u128 },
    /// An explicit list of per-node member choices.
    Sampled(Vec<Vec<usize>>),
}

/// Number of distinct instantiations of the model.
pub fn instantiation_count(model: &CascadeModel) -> u128 {
    model
        .ensembles
        .iter()
        .try_fold(1u128, |acc, e| acc.checked_mul(e.members.len() as u128))
        .unwrap_or(u128::MAX)
}

/// `count` instantiations drawn uniformly and independently.
pub fn sample_instantiations(model: &CascadeModel, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            model
                .ensembles
                .iter()
                .map(|e| rng.random_range(0..e.members.len()))
                .collect()
        })
        .collect()
}

/// Sums [`classify_single`] over explicitly listed instantiations. Margins
/// add the chosen members' margins along each voting path.
pub fn classify_oracle(x: &[f64], model: &CascadeModel, mode: &OracleMode) -> Result<VoteResult> {
    let mut out = VoteResult::empty(model.classes());
    let shape = model.shape();
    let add = |choice: &[usize], out: &mut VoteResult| -> Result<()> {
        let votes = classify_single(x, model, choice)?;
        for (c, &v) in votes.iter().enumerate() {
            if v == 0 {
                continue;
            }
            out.votes[c] += 1;
            let leaf = model.tree.leaf_of_class(c).expect("validated model");
            for n in model.tree.ancestors(leaf)? {
                out.margins[c] += model.ensembles[n].members[choice[n]].margin(x, shape);
            }
        }
        out.visited += 1;
        Ok(())
    };
    match mode {
        OracleMode::Sampled(list) => {
            for choice in list {
                add(choice, &mut out)?;
            }
        }
        OracleMode::Enumerate { cap } => {
            let count = instantiation_count(model);
            if count > *cap {
                return Err(Error::EnumerationTooLarge { count, cap: *cap });
            }
            let radix: Vec<usize> = model.ensembles.iter().map(|e| e.members.len()).collect();
            let mut choice = vec![0usize; radix.len()];
            loop {
                add(&choice, &mut out)?;
                let mut i = 0;
                while i < choice.len() {
                    choice[i] += 1;
                    if choice[i] < radix[i] {
                        break;
                    }
                    choice[i] = 0;
                    i += 1;
                }
                if i == choice.len() {
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// The single-cascade vote of one leaf written as the product of the chosen
/// members' indicator outputs along its root path.
pub fn path_product(x: &[f64], model: &CascadeModel, choice: &[usize], leaf: usize) -> Result<u8> {
    let shape = model.shape();
    let mut v = 1u8;
    for n in model.tree.ancestors(leaf)? {
        v *= u8::from(model.ensembles[n].members[choice[n]].fires(x, shape));
    }
    Ok(v)
}

/// Per-class count of member assignments along the leaf's root path in which
/// every chosen member fires, found by listing all `M^depth` assignments.
pub fn path_enumeration(x: &[f64], model: &CascadeModel) -> Result<Vec<u64>> {
    let shape = model.shape();
    let mut out = vec![0u64; model.classes()];
    for leaf in model.tree.leaves() {
        let path = model.tree.ancestors(leaf)?;
        let radix: Vec<usize> = path.iter().map(|&n| model.ensembles[n].members.len()).collect();
        let total = radix
            .iter()
            .try_fold(1u128, |a, &r| a.checked_mul(r as u128))
            .unwrap_or(u128::MAX);
        if total > ENUMERATION_CAP {
            return Err(Error::EnumerationTooLarge {
                count: total,
                cap: ENUMERATION_CAP,
            });
        }
        let mut choice = vec![0usize; path.len()];
        let mut count = 0u64;
        loop {
            let all = path
                .iter()
                .zip(&choice)
                .all(|(&n, &j)| model.ensembles[n].members[j].fires(x, shape));
            count += u64::from(all);
            let mut i = 0;
            while i < choice.len() {
                choice[i] += 1;
                if choice[i] < radix[i] {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
            if i == choice.len() {
                break;
            }
        }
        out[leaf_class(model, leaf)] = count;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::testing::random_model;
    use rand::Rng;

    #[test]
    fn always_firing_members_vote_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = random_model(&mut rng, 7, 2);
        for e in &mut model.ensembles {
            for m in &mut e.members {
                m.weights.iter_mut().for_each(|w| *w = 0.0);
                *m.weights.last_mut().unwrap() = 1.0;
            }
        }
        let x = vec![0.3; model.shape().dim()];
        let votes = classify_single(&x, &model, &vec![0; model.tree.len()]).unwrap();
        assert!(votes.iter().all(|&v| v == 1));
        let e = classify_ensemble(&x, &model);
        for leaf in model.tree.leaves() {
            let path = model.tree.ancestors(leaf).unwrap().len() as u32;
            assert_eq!(e.votes[leaf_class(&model, leaf)], 2u64.pow(path));
        }
    }

    #[test]
    fn silent_root_silences_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = random_model(&mut rng, 9, 3);
        for m in &mut model.ensembles[0].members {
            m.weights.iter_mut().for_each(|w| *w = 0.0);
            *m.weights.last_mut().unwrap() = -1.0;
        }
        let x = vec![0.5; model.shape().dim()];
        let e = classify_ensemble(&x, &model);
        assert!(e.votes.iter().all(|&v| v == 0));
        assert_eq!(e.visited, 1);
        let votes = classify_single(&x, &model, &vec![1; model.tree.len()]).unwrap();
        assert!(votes.iter().all(|&v| v == 0));
    }

    #[test]
    fn counts_multiply_along_the_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (nodes, m) = (rng.random_range(1..=15), rng.random_range(1..=3));
            let model = random_model(&mut rng, nodes, m);
            let x: Vec<f64> = (0..model.shape().dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e = classify_ensemble(&x, &model);
            for leaf in model.tree.leaves() {
                let expected: u64 = model
                    .tree
                    .ancestors(leaf)
                    .unwrap()
                    .iter()
                    .map(|&n| model.ensembles[n].evaluate(&x, model.shape()).0)
                    .product();
                assert_eq!(e.votes[leaf_class(&model, leaf)], expected);
            }
            // visited nodes are exactly those whose parent had a nonzero product
            let mut reach = vec![false; model.tree.len()];
            reach[0] = true;
            let mut expect_visits = 0;
            for n in &model.tree.nodes {
                if !reach[n.id] {
                    continue;
                }
                expect_visits += 1;
                if model.ensembles[n.id].evaluate(&x, model.shape()).0 > 0 {
                    for &c in &n.children {
                        reach[c] = true;
                    }
                }
            }
            assert_eq!(e.visited, expect_visits);
        }
    }

    #[test]
    fn enumeration_matches_implicit_ensemble_on_seven_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let model = random_model(&mut rng, 7, 2);
            let x: Vec<f64> = (0..model.shape().dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = classify_ensemble(&x, &model);
            let b = classify_oracle(&x, &model, &OracleMode::Enumerate { cap: ENUMERATION_CAP }).unwrap();
            // enumeration counts every instantiation, including the choices at
            // nodes off the leaf's path
            for leaf in model.tree.leaves() {
                let c = leaf_class(&model, leaf);
                let off_path = model.tree.len() - model.tree.ancestors(leaf).unwrap().len();
                assert_eq!(b.votes[c], a.votes[c] * 2u64.pow(off_path as u32));
            }
        }
    }

    #[test]
    fn single_member_oracle_is_single_cascade() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = random_model(&mut rng, 10, 1);
        let x: Vec<f64> = (0..model.shape().dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let o = classify_oracle(&x, &model, &OracleMode::Enumerate { cap: 10 }).unwrap();
        let s = classify_single(&x, &model, &[0; 10]).unwrap();
        assert_eq!(o.votes, s.iter().map(|&v| u64::from(v)).collect::<Vec<_>>());
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = random_model(&mut rng, 15, 3);
        let x = vec![0.0; model.shape().dim()];
        let err = classify_oracle(&x, &model, &OracleMode::Enumerate { cap: 1000 }).unwrap_err();
        assert!(matches!(err, Error::EnumerationTooLarge { .. }));
    }

    #[test]
    fn bad_instantiation_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = random_model(&mut rng, 5, 2);
        let x = vec![0.0; model.shape().dim()];
        assert!(classify_single(&x, &model, &[0, 0]).is_err());
        assert!(classify_single(&x, &model, &[0, 0, 0, 0, 2]).is_err());
    }

    #[test]
    fn ranking_breaks_ties_by_margin_then_class() {
        let r = VoteResult {
            votes: vec![2, 3, 2, 0, 2],
            margins: vec![1.0, -5.0, 1.0, 9.0, 4.0],
            visited: 0,
        };
        let order: Vec<usize> = r.ranked().iter().map(|c| c.class).collect();
        assert_eq!(order, vec![1, 4, 0, 2]);
    }
    #[test]
    fn path_enumeration_equals_implicit_ensemble() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let (nodes, m) = (rng.random_range(1..=15), rng.random_range(1..=3));
            let model = random_model(&mut rng, nodes, m);
            let x: Vec<f64> = (0..model.shape().dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(
                path_enumeration(&x, &model).unwrap(),
                classify_ensemble(&x, &model).votes
            );
        }
    }

    #[test]
    fn single_cascade_equals_path_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let (nodes, m) = (rng.random_range(1..=15), rng.random_range(1..=3));
            let model = random_model(&mut rng, nodes, m);
            let x: Vec<f64> = (0..model.shape().dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let choice = sample_instantiations(&model, 1, rng.random()).remove(0);
            let votes = classify_single(&x, &model, &choice).unwrap();
            for leaf in model.tree.leaves() {
                assert_eq!(
                    votes[leaf_class(&model, leaf)],
                    path_product(&x, &model, &choice, leaf).unwrap()
                );
            }
        }
    }

    #[test]
    fn sampled_votes_track_the_enumerated_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut checked = 0;
        for _ in 0..40 {
            let model = random_model(&mut rng, 7, 3);
            let x: Vec<f64> = (0..model.shape().dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let full = classify_oracle(&x, &model, &OracleMode::Enumerate { cap: ENUMERATION_CAP }).unwrap();
            let total = instantiation_count(&model) as f64;
            let n = 100;
            let sampled = classify_oracle(
                &x,
                &model,
                &OracleMode::Sampled(sample_instantiations(&model, n, rng.random())),
            )
            .unwrap();
            for c in 0..model.classes() {
                let p = full.votes[c] as f64 / total;
                let mean = n as f64 * p;
                let sd = (n as f64 * p * (1.0 - p)).sqrt();
                // 4 standard deviations, two-sided
                assert!(
                    (sampled.votes[c] as f64 - mean).abs() <= 4.0 * sd + 1e-9,
                    "p {p} got {}",
                    sampled.votes[c]
                );
                checked += 1;
            }
        }
        assert!(checked > 40);
    }
}
