use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::synth::denormalize;

/// Side of the reference box that class templates are drawn into, px.
pub const TEMPLATE_SIDE: f64 = 100.0;

/// One quantised pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseClass {
    pub id: usize,
    pub centroid: Vec<f64>,
    pub members: Vec<usize>,
    /// Centroid keypoints drawn into a `TEMPLATE_SIDE` box at the origin.
    pub template: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantization {
    pub assignments: Vec<usize>,
    pub classes: Vec<PoseClass>,
    /// Sum of squared distances after every assignment step.
    pub objective: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn count_distinct(labels: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = labels.iter().map(|l| l.iter().map(|v| v.to_bits()).collect()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// k-means++ seeding: the first centre uniformly, then each further centre
/// with probability proportional to squared distance from the chosen ones.
fn seed_centroids(labels: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![labels[rng.random_range(0..labels.len())].clone()];
    let mut d2: Vec<f64> = labels.iter().map(|l| sq_dist(l, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = d2.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            // guard against rounding landing on an already chosen point
            if d2[idx] == 0.0 {
                idx = d2.iter().position(|&d| d > 0.0).expect("positive mass");
            }
            idx
        } else {
            0
        };
        let c = labels[pick].clone();
        for (d, l) in d2.iter_mut().zip(labels) {
            *d = d.min(sq_dist(l, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeding. An emptied cluster is re-seeded
/// with the point farthest from its current centroid (lowest index on ties).
pub fn kmeans_quantize(labels: &[Vec<f64>], k: usize, seed: u64, iters: usize) -> Result<Quantization> {
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    if labels.is_empty() {
        return Err(Error::invalid("no labels to quantise"));
    }
    let dim = labels[0].len();
    if labels
        .iter()
        .any(|l| l.len() != dim || l.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::invalid("labels must share one dimension and be finite"));
    }
    let distinct = count_distinct(labels);
    if k > distinct {
        return Err(Error::invalid(format!(
            "K = {k} exceeds the {distinct} distinct labels"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(labels, k, &mut rng);
    let mut assignments: Vec<usize> = vec![usize::MAX; labels.len()];
    let mut objective = Vec::new();

    for _ in 0..iters.max(1) {
        let step: Vec<(usize, f64)> = labels.par_iter().map(|l| nearest(l, &centroids)).collect();
        let changed = step.iter().zip(&assignments).any(|((j, _), a)| j != a);
        for (a, (j, _)) in assignments.iter_mut().zip(&step) {
            *a = *j;
        }
        let mut cost: Vec<f64> = step.iter().map(|(_, d)| *d).collect();
        objective.push(cost.iter().sum());
        if !changed {
            break;
        }
        update_centroids(labels, &mut assignments, &mut centroids, &mut cost);
    }
    // centroids must be the exact means of the final assignment
    let mut cost: Vec<f64> = labels
        .iter()
        .zip(&assignments)
        .map(|(l, &a)| sq_dist(l, &centroids[a]))
        .collect();
    update_centroids(labels, &mut assignments, &mut centroids, &mut cost);
    let final_cost: f64 = labels
        .iter()
        .zip(&assignments)
        .map(|(l, &a)| sq_dist(l, &centroids[a]))
        .sum();
    if objective.last().is_none_or(|&last| final_cost != last) {
        objective.push(final_cost);
    }

    let reference = BoundingBox::new(0.0, 0.0, TEMPLATE_SIDE, TEMPLATE_SIDE);
    let classes = centroids
        .into_iter()
        .enumerate()
        .map(|(id, centroid)| PoseClass {
            id,
            members: (0..labels.len()).filter(|&i| assignments[i] == id).collect(),
            template: denormalize(&centroid, &reference),
            centroid,
        })
        .collect();
    Ok(Quantization {
        assignments,
        classes,
        objective,
    })
}

/// Recomputes every centroid as its members' mean. Empty clusters take over
/// the currently worst-served point, which can only lower the objective.
fn update_centroids(labels: &[Vec<f64>], assignments: &mut [usize], centroids: &mut [Vec<f64>], cost: &mut [f64]) {
    let k = centroids.len();
    let dim = labels[0].len();
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let mut far = 0;
        for i in 0..labels.len() {
            if counts[assignments[i]] > 1 && (counts[assignments[far]] <= 1 || cost[i] > cost[far]) {
                far = i;
            }
        }
        assignments[far] = empty;
        cost[far] = 0.0;
        centroids[empty] = labels[far].clone();
    }
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (l, &a) in labels.iter().zip(assignments.iter()) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(l) {
            *s += v;
        }
    }
    for ((c, s), n) in centroids.iter_mut().zip(sums).zip(counts) {
        *c = s.into_iter().map(|v| v / n as f64).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut labels = Vec::new();
        let mut truth = Vec::new();
        for i in 0..n {
            let b = i % 2;
            let offset = if b == 0 { 0.0 } else { sep };
            labels.push((0..40).map(|_| offset + noise.sample(&mut rng)).collect());
            truth.push(b);
        }
        (labels, truth)
    }

    #[test]
    fn one_class_per_distinct_point() {
        let labels: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let q = kmeans_quantize(&labels, 6, 3, 50).unwrap();
        assert_eq!(*q.objective.last().unwrap(), 0.0);
        let mut a = q.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn identical_points_single_class() {
        let labels = vec![vec![0.25, -0.5]; 9];
        let q = kmeans_quantize(&labels, 1, 0, 10).unwrap();
        assert_eq!(q.classes[0].centroid, vec![0.25, -0.5]);
        assert!(kmeans_quantize(&labels, 2, 0, 10).is_err());
    }

    #[test]
    fn separated_blobs_are_recovered() {
        // 10 sigma separation per coordinate
        let (labels, truth) = blobs(400, 10.0, 5);
        let q = kmeans_quantize(&labels, 2, 11, 100).unwrap();
        let agree = q.assignments.iter().zip(&truth).filter(|(a, t)| a == t).count();
        let agree = agree.max(400 - agree);
        assert!(agree as f64 >= 0.99 * 400.0, "{agree}");
    }

    #[test]
    fn objective_never_increases_and_centroids_are_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let labels: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..40).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let q = kmeans_quantize(&labels, 12, 1, 100).unwrap();
        for w in q.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", q.objective);
        }
        for c in &q.classes {
            assert!(!c.members.is_empty());
            for d in 0..40 {
                let mean = c.members.iter().map(|&m| labels[m][d]).sum::<f64>() / c.members.len() as f64;
                assert!((mean - c.centroid[d]).abs() < 1e-6);
            }
        }
        assert_eq!(q, kmeans_quantize(&labels, 12, 1, 100).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kmeans_quantize(&[], 1, 0, 5).is_err());
        assert!(kmeans_quantize(&[vec![1.0]], 0, 0, 5).is_err());
        assert!(kmeans_quantize(&[vec![1.0], vec![1.0, 2.0]], 1, 0, 5).is_err());
    }
}
