//! Central-difference gradient checks in 64-bit.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{zero_grad, Module, Slot, SlotMut};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub worst: String,
    pub checked: usize,
}

impl GradReport {
    fn new() -> Self {
        Self { max_rel_err: 0.0, worst: String::new(), checked: 0 }
    }

    fn record(&mut self, analytic: f64, numeric: f64, what: impl FnOnce() -> String) {
        let e = rel_err(analytic, numeric);
        self.checked += 1;
        if e > self.max_rel_err || e.is_nan() {
            self.max_rel_err = if e.is_nan() { f64::INFINITY } else { e };
            self.worst = format!("{} (analytic {analytic:e}, numeric {numeric:e})", what());
        }
    }

    pub fn merge(mut self, other: GradReport) -> Self {
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn random_tensor<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.sample(StandardNormal)).collect())
}

fn nudge<M: Module<f64>>(m: &mut M, target: usize, elem: usize, delta: f64) {
    let mut idx = 0;
    m.visit_mut("", &mut |_, s| {
        if let SlotMut::Param(p) = s {
            if idx == target {
                p.value.as_mut_slice()[elem] += delta;
            }
            idx += 1;
        }
    });
}

/// Compares parameter gradients against central differences.
///
/// `f(m, true)` must run forward, accumulate gradients by backward, and return
/// the scalar objective; `f(m, false)` only evaluates it. Gradients are zeroed
/// before the analytic pass.
pub fn check_params<M: Module<f64>>(m: &mut M, mut f: impl FnMut(&mut M, bool) -> f64) -> GradReport {
    zero_grad(m);
    f(m, true);
    let mut grads = Vec::new();
    m.visit("", &mut |name, s| {
        if let Slot::Param(p) = s {
            grads.push((name.to_string(), p.grad.as_slice().to_vec()));
        }
    });
    let mut report = GradReport::new();
    for (pi, (name, g)) in grads.iter().enumerate() {
        for (e, &analytic) in g.iter().enumerate() {
            nudge(m, pi, e, FD_STEP);
            let up = f(m, false);
            nudge(m, pi, e, -2.0 * FD_STEP);
            let down = f(m, false);
            nudge(m, pi, e, FD_STEP);
            report.record(analytic, (up - down) / (2.0 * FD_STEP), || format!("{name}[{e}]"));
        }
    }
    report
}

/// Compares an input gradient against central differences. `f` returns the
/// objective and its gradient with respect to the input.
pub fn check_input_grad(x: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> (f64, Tensor<f64>)) -> GradReport {
    let (_, g) = f(x);
    assert_eq!(g.shape(), x.shape(), "input gradient shape");
    let mut report = GradReport::new();
    let mut xp = x.clone();
    for i in 0..x.len() {
        xp.as_mut_slice()[i] = x.as_slice()[i] + FD_STEP;
        let up = f(&xp).0;
        xp.as_mut_slice()[i] = x.as_slice()[i] - FD_STEP;
        let down = f(&xp).0;
        xp.as_mut_slice()[i] = x.as_slice()[i];
        report.record(g.as_slice()[i], (up - down) / (2.0 * FD_STEP), || format!("input[{i}]"));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_wrong_gradient() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]);
        let ok = check_input_grad(&x, |v| {
            let s = v.as_slice();
            (s[0] * s[0] + 3.0 * s[1], Tensor::from_vec(&[2], vec![2.0 * s[0], 3.0]))
        });
        assert!(ok.max_rel_err < 1e-8);
        let bad = check_input_grad(&x, |v| {
            let s = v.as_slice();
            (s[0] * s[0] + 3.0 * s[1], Tensor::from_vec(&[2], vec![s[0], 3.0]))
        });
        assert!(bad.max_rel_err > 0.4);
        assert!(bad.worst.starts_with("input[0]"));
    }
}
