use rand::Rng;

use super::layers::{Elu, Linear};
use super::{join, Module, Slot, SlotMut};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Projection head `F`: four linear layers with ELU between them.
#[derive(Debug, Clone)]
pub struct ProjectionHead<T> {
    layers: Vec<Linear<T>>,
    acts: Vec<Elu<T>>,
}

impl<T: Scalar> ProjectionHead<T> {
    /// `in_dim → hidden → hidden → hidden → out_dim`.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        let dims = [in_dim, hidden, hidden, hidden, out_dim];
        Self {
            layers: dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect(),
            acts: (0..3).map(|_| Elu::new()).collect(),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::outputs)
    }

    pub fn forward(&mut self, h: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = self.layers[0].forward(h)?;
        for i in 1..self.layers.len() {
            x = self.acts[i - 1].forward(&x);
            x = self.layers[i].forward(&x)?;
        }
        Ok(x)
    }

    /// Returns the gradient with respect to the head input.
    pub fn backward(&mut self, dq: &Tensor<T>) -> Tensor<T> {
        let last = self.layers.len() - 1;
        let mut g = self.layers[last].backward(dq);
        for i in (0..last).rev() {
            g = self.acts[i].backward(&g);
            g = self.layers[i].backward(&g);
        }
        g
    }
}

impl<T: Scalar> Module<T> for ProjectionHead<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("fc{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, SlotMut<'_, T>)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("fc{i}")), f);
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let k = logits.dim(logits.ndim() - 1);
    let mut out = logits.clone();
    for row in out.as_mut_slice().chunks_mut(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    out
}

/// Gradient with respect to the logits given the softmax output `p` and `dL/dp`.
pub fn softmax_backward<T: Scalar>(p: &Tensor<T>, dp: &Tensor<T>) -> Tensor<T> {
    let k = p.dim(p.ndim() - 1);
    let mut out = Vec::with_capacity(p.len());
    for (pr, gr) in p.as_slice().chunks(k).zip(dp.as_slice().chunks(k)) {
        let dot: T = pr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        out.extend(pr.iter().zip(gr).map(|(&a, &b)| a * (b - dot)));
    }
    Tensor::from_vec(p.shape(), out)
}

/// Subject classifier `C_sub`: `Linear → ELU → Linear → softmax`.
#[derive(Debug, Clone)]
pub struct SubjectClassifier<T> {
    fc0: Linear<T>,
    act: Elu<T>,
    fc1: Linear<T>,
    probs: Option<Tensor<T>>,
}

impl<T: Scalar> SubjectClassifier<T> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, n_subjects: usize, rng: &mut R) -> Result<Self> {
        if n_subjects < 2 {
            return Err(Error::Config(format!("subject classifier needs at least 2 subjects, got {n_subjects}")));
        }
        Ok(Self { fc0: Linear::new(in_dim, hidden, rng), act: Elu::new(), fc1: Linear::new(hidden, n_subjects, rng), probs: None })
    }

    pub fn n_subjects(&self) -> usize {
        self.fc1.outputs()
    }

    /// Class probabilities `[batch, n_subjects]`.
    pub fn forward(&mut self, h: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.fc0.forward(h)?;
        let x = self.act.forward(&x);
        let p = softmax_rows(&self.fc1.forward(&x)?);
        self.probs = Some(p.clone());
        Ok(p)
    }

    /// Takes `dL/dp`; returns the gradient with respect to `h`.
    pub fn backward(&mut self, dp: &Tensor<T>) -> Tensor<T> {
        let p = self.probs.as_ref().expect("classifier backward before forward");
        let g = softmax_backward(p, dp);
        let g = self.fc1.backward(&g);
        let g = self.act.backward(&g);
        self.fc0.backward(&g)
    }
}

impl<T: Scalar> Module<T> for SubjectClassifier<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        self.fc0.visit(&join(prefix, "fc0"), f);
        self.fc1.visit(&join(prefix, "fc1"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, SlotMut<'_, T>)) {
        self.fc0.visit_mut(&join(prefix, "fc0"), f);
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
    }
}
