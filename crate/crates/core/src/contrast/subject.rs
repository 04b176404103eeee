//! Subject-classifier cross-entropy and the confusion regularizer that the
//! encoder minimizes to hide subject identity.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const PROB_CLAMP: f64 = 1e-7;

fn check<T: Scalar>(p: &Tensor<T>, targets: &[usize]) -> Result<usize> {
    if p.ndim() != 2 {
        return Err(Error::Shape(format!("probabilities must be [batch, subjects], got {:?}", p.shape())));
    }
    let (b, k) = (p.dim(0), p.dim(1));
    if targets.len() != b {
        return Err(Error::Shape(format!("{b} probability rows but {} targets", targets.len())));
    }
    if b == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if let Some(&s) = targets.iter().find(|&&s| s >= k) {
        return Err(Error::Range(format!("subject index {s} outside {k} classes")));
    }
    for (i, row) in p.as_slice().chunks(k).enumerate() {
        let s = row.iter().copied().sum::<T>().to_f64_lossy();
        if !((s - 1.0).abs() <= 1e-3) {
            return Err(Error::Contract(format!("probability row {i} sums to {s}")));
        }
    }
    Ok(k)
}

/// Applies `f(p_clamped) -> (value, derivative)` at each target entry;
/// entries outside the clamp range get zero derivative.
fn target_term<T: Scalar>(p: &Tensor<T>, targets: &[usize], f: impl Fn(T) -> (T, T)) -> Result<(T, Tensor<T>)> {
    let k = check(p, targets)?;
    let b = targets.len();
    let (lo, hi) = (T::lit(PROB_CLAMP), T::lit(1.0 - PROB_CLAMP));
    let inv_b = T::one() / T::lit(b as f64);
    let mut dp = Tensor::zeros(p.shape());
    let mut total = T::zero();
    for (i, &s) in targets.iter().enumerate() {
        let raw = p.as_slice()[i * k + s];
        let pc = raw.max(lo).min(hi);
        let (v, d) = f(pc);
        total += v;
        if raw > lo && raw < hi {
            dp.as_mut_slice()[i * k + s] = d * inv_b;
        }
    }
    Ok((total * inv_b, dp))
}

/// Mean of `-log p[i, s_i]`; returns the loss and `dL/dp`.
pub fn subject_ce_loss<T: Scalar>(p: &Tensor<T>, targets: &[usize]) -> Result<(T, Tensor<T>)> {
    target_term(p, targets, |x| (-x.ln(), -T::one() / x))
}

/// Mean of `-log(1 - p[i, s_i])`; returns the value and `dr/dp`.
pub fn subject_confusion_reg<T: Scalar>(p: &Tensor<T>, targets: &[usize]) -> Result<(T, Tensor<T>)> {
    target_term(p, targets, |x| (-(T::one() - x).ln(), T::one() / (T::one() - x)))
}
