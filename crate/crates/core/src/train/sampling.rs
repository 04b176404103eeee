use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_BETA: f64 = 0.999;
pub const DEFAULT_MIXUP_ALPHA: f64 = 0.2;

/// How minibatches are drawn when labels are imbalanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Epoch-wise permutation.
    #[default]
    Shuffle,
    /// Class uniformly, then an example uniformly within it, with replacement.
    BalancedResample,
    /// Shuffled batches with per-class loss weights.
    WeightedCe,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
    pub beta: f64,
    pub counts: Vec<usize>,
}

/// Effective-number weights `(1 − β) / (1 − β^n)`, or the literal
/// `(1 − β^n) / (1 − β)` when `verbatim` is set. Absent classes get 0. The
/// `unknown` class, if given, then takes the weight of the most frequent class.
pub fn class_balanced_weights(counts: &[usize], beta: f64, verbatim: bool, unknown: Option<usize>) -> Result<ClassWeights> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Config(format!("beta must lie in (0, 1), got {beta}")));
    }
    if let Some(u) = unknown.filter(|&u| u >= counts.len()) {
        return Err(Error::Range(format!("unknown class {u} outside {} classes", counts.len())));
    }
    let mut weights: Vec<f64> = counts
        .iter()
        .map(|&n| {
            if n == 0 {
                return 0.0;
            }
            let effective = (1.0 - beta.powf(n as f64)) / (1.0 - beta);
            if verbatim {
                effective
            } else {
                1.0 / effective
            }
        })
        .collect();
    if let Some(u) = unknown {
        // first class among ties, so the choice does not depend on iteration order
        let major = (0..counts.len()).fold(0, |best, i| if counts[i] > counts[best] { i } else { best });
        weights[u] = weights[major];
    }
    Ok(ClassWeights { weights, beta, counts: counts.to_vec() })
}

pub fn class_counts(labels: &[usize], n_classes: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0; n_classes];
    for &y in labels {
        *counts.get_mut(y).ok_or_else(|| Error::Range(format!("label {y} outside {n_classes} classes")))? += 1;
    }
    Ok(counts)
}

/// Draws example indices with every class equally likely.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    by_class: Vec<Vec<usize>>,
}

impl BalancedSampler {
    /// Every class in `0..n_classes` must have at least one example.
    pub fn new(labels: &[usize], n_classes: usize) -> Result<Self> {
        let mut by_class = vec![Vec::new(); n_classes];
        for (i, &y) in labels.iter().enumerate() {
            by_class.get_mut(y).ok_or_else(|| Error::Range(format!("label {y} outside {n_classes} classes")))?.push(i);
        }
        if let Some(c) = by_class.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInput(format!("class {c} has no examples to resample")));
        }
        Ok(Self { by_class })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let pool = &self.by_class[rng.random_range(0..self.by_class.len())];
        pool[rng.random_range(0..pool.len())]
    }
}

/// Example order for one epoch of minibatches under `mode`.
pub fn epoch_order<R: Rng + ?Sized>(n: usize, mode: SamplingMode, balanced: Option<&BalancedSampler>, rng: &mut R) -> Vec<usize> {
    match (mode, balanced) {
        (SamplingMode::BalancedResample, Some(s)) => (0..n).map(|_| s.draw(rng)).collect(),
        _ => {
            let mut order: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
            order
        }
    }
}

/// `γ ~ Beta(α, α)`, then [`mixup_with`].
pub fn mixup<T: Scalar, R: Rng + ?Sized>(
    x1: &Tensor<T>,
    y1: &[f64],
    x2: &Tensor<T>,
    y2: &[f64],
    alpha: f64,
    rng: &mut R,
) -> Result<(Tensor<T>, Vec<f64>)> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("mixup alpha must be positive, got {alpha}")));
    }
    let gamma = Beta::new(alpha, alpha).map_err(|e| Error::Config(format!("mixup alpha: {e}")))?.sample(rng);
    mixup_with(x1, y1, x2, y2, gamma)
}

/// `x̃ = γ x1 + (1 − γ) x2`, `ỹ = γ y1 + (1 − γ) y2`.
pub fn mixup_with<T: Scalar>(x1: &Tensor<T>, y1: &[f64], x2: &Tensor<T>, y2: &[f64], gamma: f64) -> Result<(Tensor<T>, Vec<f64>)> {
    if x1.shape() != x2.shape() || y1.len() != y2.len() {
        return Err(Error::Shape(format!(
            "mixup inputs {:?}/{} and {:?}/{} differ",
            x1.shape(),
            y1.len(),
            x2.shape(),
            y2.len()
        )));
    }
    let (g, h) = (T::lit(gamma), T::lit(1.0 - gamma));
    let x = x1.as_slice().iter().zip(x2.as_slice()).map(|(&a, &b)| g * a + h * b).collect();
    let y = y1.iter().zip(y2).map(|(&a, &b)| gamma * a + (1.0 - gamma) * b).collect();
    Ok((Tensor::from_vec(x1.shape(), x), y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn weight_examples() {
        for verbatim in [false, true] {
            let w = class_balanced_weights(&[1], 0.999, verbatim, None).unwrap();
            assert!((w.weights[0] - 1.0).abs() < 1e-12);
        }
        let v = class_balanced_weights(&[10], 0.999, true, None).unwrap().weights[0];
        let d = class_balanced_weights(&[10], 0.999, false, None).unwrap().weights[0];
        let direct = (1.0 - 0.999f64.powi(10)) / 0.001;
        assert!((v - direct).abs() < 1e-9 && (v - 9.9552).abs() < 1e-3);
        assert!((d * v - 1.0).abs() < 1e-12 && (d - 0.10045).abs() < 1e-5);
        assert_eq!(class_balanced_weights(&[0, 3], 0.999, false, None).unwrap().weights[0], 0.0);
    }

    #[test]
    fn unknown_class_takes_majority_weight() {
        let w = class_balanced_weights(&[500, 40, 30, 2], 0.999, false, Some(3)).unwrap();
        assert_eq!(w.weights[3], w.weights[0]);
        assert!(w.weights[1] > w.weights[0]);
        assert!(class_balanced_weights(&[1, 2], 0.999, false, Some(2)).is_err());
    }

    #[test]
    fn balanced_draws_equalize_classes() {
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 90)).collect();
        let s = BalancedSampler::new(&labels, 2).unwrap();
        let mut rng = stream(3, 0);
        let ones = (0..10_000).filter(|_| labels[s.draw(&mut rng)] == 1).count();
        assert!((ones as f64 / 1e4 - 0.5).abs() < 0.02, "{ones}");
        assert!(BalancedSampler::new(&[0, 0, 2], 3).is_err());
    }

    #[test]
    fn single_class_is_uniform_over_examples() {
        let s = BalancedSampler::new(&[0; 4], 1).unwrap();
        let mut hits = [0; 4];
        let mut rng = stream(4, 0);
        for _ in 0..4000 {
            hits[s.draw(&mut rng)] += 1;
        }
        assert!(hits.iter().all(|&h| (h as f64 - 1000.0).abs() < 120.0), "{hits:?}");
        let a: Vec<usize> = (0..20).map(|_| s.draw(&mut stream(9, 1))).collect();
        let b: Vec<usize> = (0..20).map(|_| s.draw(&mut stream(9, 1))).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn mixup_properties() {
        let x1 = Tensor::from_vec(&[2], vec![1.0f64, 2.0]);
        let x2 = Tensor::from_vec(&[2], vec![-3.0, 5.0]);
        let (x, y) = mixup_with(&x1, &[1.0, 0.0], &x2, &[0.0, 1.0], 1.0).unwrap();
        assert_eq!((x, y), (x1.clone(), vec![1.0, 0.0]));
        let mut rng = stream(5, 0);
        let (_, y) = mixup(&x1, &[0.0, 1.0], &x2, &[1.0, 0.0], 0.2, &mut rng).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(mixup_with(&x1, &[1.0], &Tensor::zeros(&[3]), &[1.0], 0.5).is_err());
        assert!(mixup(&x1, &[1.0], &x2, &[1.0], 0.0, &mut rng).is_err());
    }

    #[test]
    fn beta_mean_is_one_half() {
        let beta = Beta::new(DEFAULT_MIXUP_ALPHA, DEFAULT_MIXUP_ALPHA).unwrap();
        let mut rng = stream(6, 0);
        let mean = (0..100_000).map(|_| beta.sample(&mut rng)).sum::<f64>() / 1e5;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }
}
