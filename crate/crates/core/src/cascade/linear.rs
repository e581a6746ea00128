use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings for the stochastic subgradient SVM solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearConfig {
    /// L2 regularisation strength.
    pub lambda: f64,
    pub epochs: usize,
    /// Weight each class inversely to its frequency.
    pub balance: bool,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 10,
            balance: true,
        }
    }
}

impl LinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || self.epochs == 0 {
            return Err(Error::invalid("lambda must be positive and epochs at least 1"));
        }
        Ok(())
    }
}

/// Result of [`train_linear`]: the best averaged iterate and the objective at
/// each epoch checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub weights: Vec<f64>,
    pub objective: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn class_weights(labels: &[f64], balance: bool) -> (f64, f64) {
    if !balance {
        return (1.0, 1.0);
    }
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y > 0.0).count() as f64;
    (n / (2.0 * pos), n / (2.0 * (n - pos)))
}

/// `lambda/2 |w|^2 + mean_i c_i max(0, 1 - y_i w.x_i)`.
pub fn svm_objective(weights: &[f64], examples: &[&[f64]], labels: &[f64], cfg: &LinearConfig) -> f64 {
    let (cp, cn) = class_weights(labels, cfg.balance);
    let loss: f64 = examples
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let c = if y > 0.0 { cp } else { cn };
            c * (1.0 - y * dot(weights, x)).max(0.0)
        })
        .sum();
    0.5 * cfg.lambda * dot(weights, weights) + loss / examples.len() as f64
}

/// L2-regularised hinge-loss SVM by stochastic subgradient descent with step
/// `1/(lambda t)`. Examples carry their own bias coordinate. Each epoch visits
/// a fresh permutation; after each epoch the running average of the iterates
/// is scored and the best one seen so far is kept.
pub fn train_linear(examples: &[&[f64]], labels: &[f64], cfg: &LinearConfig, seed: u64) -> Result<LinearFit> {
    cfg.validate()?;
    if examples.is_empty() || examples.len() != labels.len() {
        return Err(Error::invalid("examples and labels must be non-empty and aligned"));
    }
    let dim = examples[0].len();
    if examples.iter().any(|x| x.len() != dim) {
        return Err(Error::invalid("examples differ in dimension"));
    }
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::invalid("labels must be +1 or -1"));
    }
    let pos = labels.iter().filter(|&&y| y > 0.0).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::invalid("training needs both positive and negative examples"));
    }
    let (cp, cn) = class_weights(labels, cfg.balance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut w = vec![0.0; dim];
    let mut avg = vec![0.0; dim];
    let mut t = 0usize;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let x = examples[i];
            let y = labels[i];
            let violated = y * dot(&w, x) < 1.0;
            let shrink = 1.0 - eta * cfg.lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if violated {
                let step = eta * y * if y > 0.0 { cp } else { cn };
                for (v, xi) in w.iter_mut().zip(x) {
                    *v += step * xi;
                }
            }
            let k = 1.0 / t as f64;
            for (a, v) in avg.iter_mut().zip(&w) {
                *a += (v - *a) * k;
            }
        }
        let obj = svm_objective(&avg, examples, labels, cfg);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, avg.clone()));
        }
        history.push(best.as_ref().expect("set above").0);
    }
    let (_, weights) = best.expect("at least one epoch");
    Ok(LinearFit {
        weights,
        objective: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = if i % 3 == 0 { 1.0 } else { -1.0 };
            let mut x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            x[0] += 0.8 * y;
            x.push(1.0);
            xs.push(x);
            ys.push(y);
        }
        (xs, ys)
    }

    #[test]
    fn separates_two_points() {
        let a = [1.0, 1.0];
        let b = [-1.0, 1.0];
        let fit = train_linear(&[&a, &b], &[1.0, -1.0], &LinearConfig::default(), 0).unwrap();
        assert!(dot(&fit.weights, &a) > 0.0);
        assert!(dot(&fit.weights, &b) < 0.0);
    }

    #[test]
    fn single_class_is_an_error() {
        let a = [1.0, 1.0];
        assert!(train_linear(&[&a, &a], &[1.0, 1.0], &LinearConfig::default(), 0).is_err());
    }

    #[test]
    fn checkpoints_never_increase() {
        let (xs, ys) = blobs(300, 1);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let cfg = LinearConfig {
            lambda: 1e-2,
            epochs: 30,
            balance: true,
        };
        let fit = train_linear(&refs, &ys, &cfg, 4).unwrap();
        for w in fit.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-6);
        }
        assert!((svm_objective(&fit.weights, &refs, &ys, &cfg) - fit.objective.last().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_data_reaches_the_same_objective() {
        let (xs, ys) = blobs(200, 2);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let mut dup = refs.clone();
        dup.extend(refs.iter().copied());
        let mut dup_y = ys.clone();
        dup_y.extend(ys.iter().copied());
        let cfg = LinearConfig {
            lambda: 5e-2,
            epochs: 200,
            balance: true,
        };
        let a = train_linear(&refs, &ys, &cfg, 7).unwrap();
        let b = train_linear(&dup, &dup_y, &cfg, 7).unwrap();
        // both objectives evaluated on the original data
        let oa = svm_objective(&a.weights, &refs, &ys, &cfg);
        let ob = svm_objective(&b.weights, &refs, &ys, &cfg);
        assert!((oa - ob).abs() < 1e-3, "{oa} vs {ob}");
    }

    #[test]
    fn deterministic_under_seed() {
        let (xs, ys) = blobs(100, 3);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let cfg = LinearConfig::default();
        assert_eq!(
            train_linear(&refs, &ys, &cfg, 9).unwrap(),
            train_linear(&refs, &ys, &cfg, 9).unwrap()
        );
    }
}
