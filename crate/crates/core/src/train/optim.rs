use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{Module, Slot, SlotMut};
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with bias correction and decoupled weight decay `lr · wd · θ`.
///
/// Decay applies to parameters with two or more axes (weight matrices and
/// convolution kernels); biases, normalization affines and `log τ` are exempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    step: u64,
    moments: BTreeMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Default for Adam<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Adam<T> {
    pub fn new() -> Self {
        Self { step: 0, moments: BTreeMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every parameter in `groups`, each named `prefix.param`.
    /// A non-finite gradient aborts before anything is modified.
    pub fn step(&mut self, groups: &mut [(&str, &mut dyn Module<T>)], lr: f64, weight_decay: f64) -> Result<()> {
        for (prefix, m) in groups.iter() {
            let mut bad = None;
            m.visit(prefix, &mut |name, s| {
                let Slot::Param(p) = s else { return };
                if bad.is_some() {
                    return;
                }
                if !p.grad.all_finite() {
                    bad = Some(Error::NonFinite { step: self.step as usize, detail: format!("gradient of {name}") });
                } else if let Some((mv, _)) = self.moments.get(name).filter(|(mv, _)| mv.len() != p.value.len()) {
                    bad = Some(Error::Shape(format!("{name} has {} elements but its moments {}", p.value.len(), mv.len())));
                }
            });
            if let Some(e) = bad {
                return Err(e);
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2));
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let (lr, eps) = (T::lit(lr), T::lit(ADAM_EPS));
        let decay = T::lit(weight_decay);
        let moments = &mut self.moments;
        for (prefix, m) in groups.iter_mut() {
            m.visit_mut(prefix, &mut |name, s| {
                let SlotMut::Param(p) = s else { return };
                let n = p.value.len();
                let (mv, vv) = moments.entry(name.to_string()).or_insert_with(|| (vec![T::zero(); n], vec![T::zero(); n]));
                let decays = p.value.ndim() >= 2 && decay != T::zero();
                let (theta, grad) = (p.value.as_mut_slice(), p.grad.as_slice());
                for i in 0..n {
                    let g = grad[i];
                    mv[i] = b1 * mv[i] + (T::one() - b1) * g;
                    vv[i] = b2 * vv[i] + (T::one() - b2) * g * g;
                    let update = (mv[i] / c1) / ((vv[i] / c2).sqrt() + eps);
                    let wd = if decays { decay * theta[i] } else { T::zero() };
                    theta[i] -= lr * (update + wd);
                }
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use crate::nn::{join, Linear, Param};

    struct Scalar1 {
        p: Param<f64>,
    }

    impl Module<f64> for Scalar1 {
        fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, f64>)) {
            f(&join(prefix, "theta"), Slot::Param(&self.p));
        }
        fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, SlotMut<'_, f64>)) {
            f(&join(prefix, "theta"), SlotMut::Param(&mut self.p));
        }
    }

    fn scalar(v: f64) -> Scalar1 {
        Scalar1 { p: Param::new(Tensor::scalar(v)) }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut lin = Linear::<f64>::new(3, 2, &mut crate::rng::stream(0, 0));
        let before = lin.weight.value.clone();
        let mut opt = Adam::new();
        opt.step(&mut [("L", &mut lin)], 0.1, 0.0).unwrap();
        assert_eq!(lin.weight.value, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = scalar(1.0);
        s.p.grad.fill(1.0);
        Adam::new().step(&mut [("", &mut s)], 0.1, 0.0).unwrap();
        assert!((s.p.value.as_slice()[0] - 0.9).abs() < 1e-7);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut s = scalar(0.0);
        let mut opt = Adam::new();
        for _ in 0..500 {
            let th = s.p.value.as_slice()[0];
            s.p.grad.as_mut_slice()[0] = 2.0 * (th - 3.0);
            opt.step(&mut [("", &mut s)], 0.1, 0.0).unwrap();
        }
        assert!((s.p.value.as_slice()[0] - 3.0).abs() < 1e-3, "{}", s.p.value.as_slice()[0]);
    }

    #[test]
    fn nan_gradient_aborts_untouched() {
        let mut s = scalar(2.0);
        s.p.grad.fill(f64::NAN);
        let mut opt = Adam::new();
        assert!(matches!(opt.step(&mut [("x", &mut s)], 0.1, 0.0), Err(Error::NonFinite { .. })));
        assert_eq!(s.p.value.as_slice()[0], 2.0);
        assert_eq!(opt.steps_taken(), 0);
    }

    #[test]
    fn decay_shrinks_matrices_only() {
        let mut lin = Linear::<f64>::zeros(2, 2);
        lin.weight.value.fill(1.0);
        lin.bias.value.fill(1.0);
        Adam::new().step(&mut [("", &mut lin)], 0.1, 0.5).unwrap();
        assert!(lin.weight.value.as_slice().iter().all(|&w| (w - 0.95).abs() < 1e-12));
        assert!(lin.bias.value.as_slice().iter().all(|&b| b == 1.0));
    }
}
