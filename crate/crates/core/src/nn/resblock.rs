use rand::Rng;

use super::layers::{BatchNorm1d, Conv1d, Elu};
use super::{join, Mode, Module, Slot, SlotMut};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Pre-activation residual block:
/// `BN → ELU → Conv(N_i, N_o, K) → BN → ELU → Conv(N_o, N_o, K)` plus a skip
/// that is the identity when `N_i = N_o` and a 1×1 convolution otherwise.
#[derive(Debug, Clone)]
pub struct ResBlock<T> {
    pub bn1: BatchNorm1d<T>,
    pub conv1: Conv1d<T>,
    pub bn2: BatchNorm1d<T>,
    pub conv2: Conv1d<T>,
    pub skip: Option<Conv1d<T>>,
    act1: Elu<T>,
    act2: Elu<T>,
}

impl<T: Scalar> ResBlock<T> {
    pub fn new<R: Rng + ?Sized>(n_in: usize, n_out: usize, kernel: usize, rng: &mut R) -> Self {
        Self {
            bn1: BatchNorm1d::new(n_in),
            conv1: Conv1d::new(n_in, n_out, kernel, rng),
            bn2: BatchNorm1d::new(n_out),
            conv2: Conv1d::new(n_out, n_out, kernel, rng),
            skip: (n_in != n_out).then(|| Conv1d::new(n_in, n_out, 1, rng)),
            act1: Elu::new(),
            act2: Elu::new(),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels()
    }

    /// `x`: `[N_i, batch, time]` → `[N_o, batch, time]`.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if x.ndim() != 3 || x.dim(0) != self.in_channels() {
            return Err(Error::Shape(format!(
                "residual block expects {} input channels, got shape {:?}",
                self.in_channels(),
                x.shape()
            )));
        }
        let h = self.bn1.forward(x, mode)?;
        let h = self.act1.forward(&h);
        let h = self.conv1.forward(&h)?;
        let h = self.bn2.forward(&h, mode)?;
        let h = self.act2.forward(&h);
        let mut out = self.conv2.forward(&h)?;
        match &mut self.skip {
            Some(conv) => out.axpy(T::one(), &conv.forward(x)?),
            None => out.axpy(T::one(), x),
        }
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let g = self.conv2.backward(dy, true).expect("input gradient requested");
        let g = self.act2.backward(&g);
        let g = self.bn2.backward(&g);
        let g = self.conv1.backward(&g, true).expect("input gradient requested");
        let g = self.act1.backward(&g);
        let mut dx = self.bn1.backward(&g);
        match &mut self.skip {
            Some(conv) => dx.axpy(T::one(), &conv.backward(dy, true).expect("input gradient requested")),
            None => dx.axpy(T::one(), dy),
        }
        dx
    }
}

impl<T: Scalar> Module<T> for ResBlock<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        if let Some(s) = &self.skip {
            s.visit(&join(prefix, "skip"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, SlotMut<'_, T>)) {
        self.bn1.visit_mut(&join(prefix, "bn1"), f);
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.bn2.visit_mut(&join(prefix, "bn2"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        if let Some(s) = &mut self.skip {
            s.visit_mut(&join(prefix, "skip"), f);
        }
    }
}
