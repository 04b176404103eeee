use rand::Rng;

use super::{join, kaiming_uniform, Mode, Module, Param, Slot, SlotMut};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

fn dims3<T: Scalar>(x: &Tensor<T>, what: &str) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [c, b, l] => Ok((c, b, l)),
        ref s => Err(Error::Shape(format!("{what} expects [channels, batch, time], got {s:?}"))),
    }
}

/// 1-D convolution, stride 1, zero padding `(K-1)/2` on the left and `K-1-(K-1)/2`
/// on the right, so the temporal length is preserved.
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    cache: Option<ConvCache<T>>,
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    cols: Vec<T>,
    batch: usize,
    len: usize,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut R) -> Self {
        assert!(in_ch > 0 && out_ch > 0 && kernel > 0, "empty convolution");
        Self {
            weight: Param::new(kaiming_uniform(&[out_ch, in_ch, kernel], in_ch * kernel, rng)),
            bias: Param::new(Tensor::zeros(&[out_ch])),
            in_ch,
            out_ch,
            kernel,
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    fn pad_left(&self) -> isize {
        ((self.kernel - 1) / 2) as isize
    }

    fn im2col(&self, x: &[T], batch: usize, len: usize) -> Vec<T> {
        let n = batch * len;
        let mut cols = vec![T::zero(); self.in_ch * self.kernel * n];
        for ci in 0..self.in_ch {
            for k in 0..self.kernel {
                let shift = k as isize - self.pad_left();
                let lo = (-shift).max(0) as usize;
                let hi = (len as isize - shift).clamp(0, len as isize) as usize;
                if lo >= hi {
                    continue;
                }
                let row = (ci * self.kernel + k) * n;
                for b in 0..batch {
                    let src = (ci * batch + b) * len;
                    let dst = row + b * len;
                    let s0 = (src as isize + lo as isize + shift) as usize;
                    cols[dst + lo..dst + hi].copy_from_slice(&x[s0..s0 + (hi - lo)]);
                }
            }
        }
        cols
    }

    /// `x`: `[in_ch, batch, time]` → `[out_ch, batch, time]`.
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, batch, len) = dims3(x, "conv1d")?;
        if c != self.in_ch {
            return Err(Error::Shape(format!("conv1d expects {} input channels, got {c}", self.in_ch)));
        }
        let n = batch * len;
        let cols = self.im2col(x.as_slice(), batch, len);
        let mut out = vec![T::zero(); self.out_ch * n];
        for (co, row) in out.chunks_mut(n.max(1)).enumerate().take(self.out_ch) {
            row.fill(self.bias.value.as_slice()[co]);
        }
        let kk = self.in_ch * self.kernel;
        T::gemm(self.out_ch, kk, n, T::one(), self.weight.value.as_slice(), kk, 1, &cols, n, 1, T::one(), &mut out, n, 1);
        self.cache = Some(ConvCache { cols, batch, len });
        Ok(Tensor::from_vec(&[self.out_ch, batch, len], out))
    }

    /// Accumulates parameter gradients; returns the input gradient when requested.
    pub fn backward(&mut self, dy: &Tensor<T>, need_input_grad: bool) -> Option<Tensor<T>> {
        let cache = self.cache.as_ref().expect("conv1d backward before forward");
        let (batch, len) = (cache.batch, cache.len);
        let n = batch * len;
        let kk = self.in_ch * self.kernel;
        assert_eq!(dy.shape(), &[self.out_ch, batch, len], "conv1d gradient shape");
        let g = dy.as_slice();
        T::gemm(self.out_ch, n, kk, T::one(), g, n, 1, &cache.cols, 1, n, T::one(), self.weight.grad.as_mut_slice(), kk, 1);
        for (co, db) in self.bias.grad.as_mut_slice().iter_mut().enumerate() {
            *db += g[co * n..(co + 1) * n].iter().copied().sum::<T>();
        }
        if !need_input_grad {
            return None;
        }
        let mut dcols = vec![T::zero(); kk * n];
        T::gemm(kk, self.out_ch, n, T::one(), self.weight.value.as_slice(), 1, kk, g, n, 1, T::zero(), &mut dcols, n, 1);
        let mut dx = vec![T::zero(); self.in_ch * n];
        for ci in 0..self.in_ch {
            for k in 0..self.kernel {
                let shift = k as isize - self.pad_left();
                let lo = (-shift).max(0) as usize;
                let hi = (len as isize - shift).clamp(0, len as isize) as usize;
                if lo >= hi {
                    continue;
                }
                let row = (ci * self.kernel + k) * n;
                for b in 0..batch {
                    let dst = ((ci * batch + b) * len) as isize + shift;
                    let src = row + b * len;
                    for t in lo..hi {
                        dx[(dst + t as isize) as usize] += dcols[src + t];
                    }
                }
            }
        }
        Some(Tensor::from_vec(&[self.in_ch, batch, len], dx))
    }
}

impl<T: Scalar> Module<T> for Conv1d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        f(&join(prefix, "weight"), Slot::Param(&self.weight));
        f(&join(prefix, "bias"), Slot::Param(&self.bias));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, SlotMut<'_, T>)) {
        f(&join(prefix, "weight"), SlotMut::Param(&mut self.weight));
        f(&join(prefix, "bias"), SlotMut::Param(&mut self.bias));
    }
}

/// Per-channel batch normalization over every non-channel position.
///
/// Running variance is updated with the unbiased batch variance.
#[derive(Debug, Clone)]
pub struct BatchNorm1d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

impl<T: Scalar> BatchNorm1d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            weight: Param::new(Tensor::full(&[channels], T::one())),
            bias: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.weight.value.len()
    }

    /// `x` has the channel axis first; any trailing shape is flattened.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let c = self.channels();
        if x.ndim() < 2 || x.dim(0) != c {
            return Err(Error::Shape(format!("batchnorm expects {c} leading channels, got {:?}", x.shape())));
        }
        let n = x.len() / c;
        if n == 0 {
            return Err(Error::Shape("batchnorm on empty input".into()));
        }
        let eps = T::lit(BN_EPS);
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); c];
        let mut out = vec![T::zero(); x.len()];
        let nt = T::lit(n as f64);
        for ch in 0..c {
            let row = &x.as_slice()[ch * n..(ch + 1) * n];
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = row.iter().copied().sum::<T>() / nt;
                    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nt;
                    let m = T::lit(BN_MOMENTUM);
                    let unbiased = if n > 1 { var * nt / T::lit((n - 1) as f64) } else { var };
                    let rm = &mut self.running_mean.as_mut_slice()[ch];
                    *rm = (T::one() - m) * *rm + m * mean;
                    let rv = &mut self.running_var.as_mut_slice()[ch];
                    *rv = (T::one() - m) * *rv + m * unbiased;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean.as_slice()[ch], self.running_var.as_slice()[ch]),
            };
            let is = T::one() / (var + eps).sqrt();
            inv_std[ch] = is;
            let (g, b) = (self.weight.value.as_slice()[ch], self.bias.value.as_slice()[ch]);
            for i in 0..n {
                let h = (row[i] - mean) * is;
                xhat[ch * n + i] = h;
                out[ch * n + i] = g * h + b;
            }
        }
        self.cache = Some(BnCache { xhat, inv_std, mode });
        Ok(Tensor::from_vec(x.shape(), out))
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let cache = self.cache.as_ref().expect("batchnorm backward before forward");
        let c = self.channels();
        let n = dy.len() / c;
        assert_eq!(dy.len(), cache.xhat.len(), "batchnorm gradient shape");
        let nt = T::lit(n as f64);
        let mut dx = vec![T::zero(); dy.len()];
        for ch in 0..c {
            let g = &dy.as_slice()[ch * n..(ch + 1) * n];
            let xh = &cache.xhat[ch * n..(ch + 1) * n];
            let sum_g: T = g.iter().copied().sum();
            let sum_gx: T = g.iter().zip(xh).map(|(&a, &b)| a * b).sum();
            self.weight.grad.as_mut_slice()[ch] += sum_gx;
            self.bias.grad.as_mut_slice()[ch] += sum_g;
            let gamma = self.weight.value.as_slice()[ch];
            let is = cache.inv_std[ch];
            let out = &mut dx[ch * n..(ch + 1) * n];
            match cache.mode {
                Mode::Train => {
                    let k = gamma * is / nt;
                    for i in 0..n {
                        out[i] = k * (nt * g[i] - sum_g - xh[i] * sum_gx);
                    }
                }
                Mode::Eval => {
                    for i in 0..n {
                        out[i] = gamma * is * g[i];
                    }
                }
            }
        }
        Tensor::from_vec(dy.shape(), dx)
    }
}

impl<T: Scalar> Module<T> for BatchNorm1d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        f(&join(prefix, "weight"), Slot::Param(&self.weight));
        f(&join(prefix, "bias"), Slot::Param(&self.bias));
        f(&join(prefix, "running_mean"), Slot::Buffer(&self.running_mean));
        f(&join(prefix, "running_var"), Slot::Buffer(&self.running_var));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, SlotMut<'_, T>)) {
        f(&join(prefix, "weight"), SlotMut::Param(&mut self.weight));
        f(&join(prefix, "bias"), SlotMut::Param(&mut self.bias));
        f(&join(prefix, "running_mean"), SlotMut::Buffer(&mut self.running_mean));
        f(&join(prefix, "running_var"), SlotMut::Buffer(&mut self.running_var));
    }
}

/// `x` for `x > 0`, `exp(x) - 1` otherwise.
#[derive(Debug, Clone, Default)]
pub struct Elu<T> {
    out: Option<Tensor<T>>,
}

impl<T: Scalar> Elu<T> {
    pub fn new() -> Self {
        Self { out: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = x.map(|v| if v > T::zero() { v } else { v.exp_m1() });
        self.out = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let y = self.out.as_ref().expect("elu backward before forward");
        let data = dy
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(&g, &o)| if o > T::zero() { g } else { g * (o + T::one()) })
            .collect();
        Tensor::from_vec(dy.shape(), data)
    }
}

/// Non-overlapping max pooling along time; a trailing remainder is dropped.
#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub size: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool1d {
    pub fn new(size: usize) -> Self {
        assert!(size > 0, "pool size must be positive");
        Self { size, cache: None }
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, b, l) = dims3(x, "maxpool")?;
        let lo = l / self.size;
        if lo == 0 {
            return Err(Error::Shape(format!("maxpool of size {} on length {l}", self.size)));
        }
        let rows = c * b;
        let mut out = Vec::with_capacity(rows * lo);
        let mut arg = Vec::with_capacity(rows * lo);
        let xs = x.as_slice();
        for r in 0..rows {
            for j in 0..lo {
                let start = r * l + j * self.size;
                let mut best = start;
                for i in start + 1..start + self.size {
                    if xs[i] > xs[best] {
                        best = i;
                    }
                }
                out.push(xs[best]);
                arg.push(best);
            }
        }
        self.cache = Some((arg, x.shape().to_vec()));
        Ok(Tensor::from_vec(&[c, b, lo], out))
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let (arg, shape) = self.cache.as_ref().expect("maxpool backward before forward");
        let mut dx = Tensor::zeros(shape);
        let d = dx.as_mut_slice();
        for (&i, &g) in arg.iter().zip(dy.as_slice()) {
            d[i] += g;
        }
        dx
    }
}

/// Mean over time: `[channels, batch, time]` → `[batch, channels]`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    shape: Option<[usize; 3]>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self { shape: None }
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, b, l) = dims3(x, "global average pool")?;
        let inv = T::one() / T::lit(l as f64);
        let mut out = vec![T::zero(); b * c];
        for ch in 0..c {
            for bi in 0..b {
                let row = &x.as_slice()[(ch * b + bi) * l..(ch * b + bi + 1) * l];
                out[bi * c + ch] = row.iter().copied().sum::<T>() * inv;
            }
        }
        self.shape = Some([c, b, l]);
        Ok(Tensor::from_vec(&[b, c], out))
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let [c, b, l] = self.shape.expect("pool backward before forward");
        let inv = T::one() / T::lit(l as f64);
        let mut dx = vec![T::zero(); c * b * l];
        for ch in 0..c {
            for bi in 0..b {
                let g = dy.as_slice()[bi * c + ch] * inv;
                dx[(ch * b + bi) * l..(ch * b + bi + 1) * l].fill(g);
            }
        }
        Tensor::from_vec(&[c, b, l], dx)
    }
}

/// `y = x W^T + b` on `[batch, in]`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::new(kaiming_uniform(&[outputs, inputs], inputs, rng)),
            bias: Param::new(Tensor::zeros(&[outputs])),
            input: None,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Param::new(Tensor::zeros(&[outputs, inputs])),
            bias: Param::new(Tensor::zeros(&[outputs])),
            input: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.apply(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Forward pass without caching.
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (i, o) = (self.inputs(), self.outputs());
        if x.ndim() != 2 || x.dim(1) != i {
            return Err(Error::Shape(format!("linear expects [batch, {i}], got {:?}", x.shape())));
        }
        let b = x.dim(0);
        let mut out = vec![T::zero(); b * o];
        for row in out.chunks_mut(o) {
            row.copy_from_slice(self.bias.value.as_slice());
        }
        T::gemm(b, i, o, T::one(), x.as_slice(), i, 1, self.weight.value.as_slice(), 1, i, T::one(), &mut out, o, 1);
        Ok(Tensor::from_vec(&[b, o], out))
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let x = self.input.as_ref().expect("linear backward before forward");
        let (i, o, b) = (self.inputs(), self.outputs(), x.dim(0));
        assert_eq!(dy.shape(), &[b, o], "linear gradient shape");
        T::gemm(o, b, i, T::one(), dy.as_slice(), 1, o, x.as_slice(), i, 1, T::one(), self.weight.grad.as_mut_slice(), i, 1);
        let db = self.bias.grad.as_mut_slice();
        for row in dy.as_slice().chunks(o) {
            for (d, &g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
        let mut dx = vec![T::zero(); b * i];
        T::gemm(b, o, i, T::one(), dy.as_slice(), o, 1, self.weight.value.as_slice(), i, 1, T::zero(), &mut dx, i, 1);
        Tensor::from_vec(&[b, i], dx)
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        f(&join(prefix, "weight"), Slot::Param(&self.weight));
        f(&join(prefix, "bias"), Slot::Param(&self.bias));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, SlotMut<'_, T>)) {
        f(&join(prefix, "weight"), SlotMut::Param(&mut self.weight));
        f(&join(prefix, "bias"), SlotMut::Param(&mut self.bias));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_input_grad, check_params, random_tensor};
    use crate::rng::stream;

    /// Direct convolution oracle on `[in, batch, time]`.
    fn conv_naive(conv: &Conv1d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (ci, b, l) = (x.dim(0), x.dim(1), x.dim(2));
        let (co, k) = (conv.out_ch, conv.kernel);
        let pad = ((k - 1) / 2) as isize;
        let w = conv.weight.value.as_slice();
        let mut out = Tensor::zeros(&[co, b, l]);
        for o in 0..co {
            for bi in 0..b {
                for t in 0..l {
                    let mut acc = conv.bias.value.as_slice()[o];
                    for i in 0..ci {
                        for kk in 0..k {
                            let j = t as isize + kk as isize - pad;
                            if (0..l as isize).contains(&j) {
                                acc += w[(o * ci + i) * k + kk] * x.as_slice()[(i * b + bi) * l + j as usize];
                            }
                        }
                    }
                    out.as_mut_slice()[(o * b + bi) * l + t] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = stream(1, 0);
        for (ci, co, k, b, l) in [(3, 4, 7, 2, 11), (2, 5, 4, 3, 6), (1, 1, 1, 1, 1), (4, 2, 5, 1, 3)] {
            let mut conv = Conv1d::<f64>::new(ci, co, k, &mut rng);
            let x = random_tensor(&[ci, b, l], &mut rng);
            let y = conv.forward(&x).unwrap();
            let r = conv_naive(&conv, &x);
            for (a, e) in y.as_slice().iter().zip(r.as_slice()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut conv = Conv1d::<f64>::new(3, 4, 3, &mut stream(0, 0));
        assert!(matches!(conv.forward(&Tensor::zeros(&[2, 1, 5])), Err(Error::Shape(_))));
    }

    #[test]
    fn conv_gradients() {
        let mut rng = stream(2, 0);
        for (ci, co, k, b, l) in [(2, 3, 3, 2, 5), (3, 2, 5, 1, 7), (1, 4, 7, 3, 4), (2, 2, 1, 2, 3), (3, 3, 4, 2, 6)] {
            let mut conv = Conv1d::<f64>::new(ci, co, k, &mut rng);
            conv.bias.value = random_tensor(&[co], &mut rng);
            let x = random_tensor(&[ci, b, l], &mut rng);
            let r = random_tensor(&[co, b, l], &mut rng);
            let report = check_params(&mut conv, |m, grad| {
                let y = m.forward(&x).unwrap();
                if grad {
                    m.backward(&r, false);
                }
                dot(&y, &r)
            });
            assert!(report.max_rel_err < 1e-4, "{report:?}");
            let report = check_input_grad(&x, |xi| {
                let mut c = conv.clone();
                let y = c.forward(xi).unwrap();
                (dot(&y, &r), c.backward(&r, true).unwrap())
            });
            assert!(report.max_rel_err < 1e-4, "{report:?}");
        }
    }

    fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn bn_train_output_is_standardized() {
        let mut rng = stream(3, 0);
        let mut bn = BatchNorm1d::<f64>::new(4);
        let x = random_tensor(&[4, 8, 10], &mut rng).map(|v| 3.0 * v + 2.0);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..4 {
            let row = &y.as_slice()[ch * 80..(ch + 1) * 80];
            let mean = row.iter().sum::<f64>() / 80.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 80.0;
            assert!(mean.abs() < 1e-3);
            assert!((var - 1.0).abs() < 1e-3);
        }
        // running stats moved 10% toward the batch statistics
        assert!(bn.running_mean.as_slice().iter().all(|&m| m > 0.1));
    }

    #[test]
    fn bn_gradients_train_and_eval() {
        let mut rng = stream(4, 0);
        for (c, b, l) in [(2, 3, 4), (3, 2, 5), (1, 4, 2), (4, 1, 6), (2, 5, 1)] {
            for mode in [Mode::Train, Mode::Eval] {
                let mut bn = BatchNorm1d::<f64>::new(c);
                bn.weight.value = random_tensor(&[c], &mut rng);
                bn.bias.value = random_tensor(&[c], &mut rng);
                bn.running_var = random_tensor(&[c], &mut rng).map(|v| v * v + 0.5);
                let x = random_tensor(&[c, b, l], &mut rng);
                let r = random_tensor(&[c, b, l], &mut rng);
                let report = check_params(&mut bn, |m, grad| {
                    let y = m.forward(&x, mode).unwrap();
                    if grad {
                        m.backward(&r);
                    }
                    dot(&y, &r)
                });
                assert!(report.max_rel_err < 1e-4, "{mode:?} {report:?}");
                let report = check_input_grad(&x, |xi| {
                    let mut m = bn.clone();
                    let y = m.forward(xi, mode).unwrap();
                    (dot(&y, &r), m.backward(&r))
                });
                assert!(report.max_rel_err < 1e-4, "{mode:?} {report:?}");
            }
        }
    }

    #[test]
    fn elu_values_and_gradients() {
        let mut e = Elu::<f64>::new();
        let y = e.forward(&Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]));
        assert!((y.as_slice()[0] - ((-1f64).exp() - 1.0)).abs() < 1e-15);
        assert_eq!(&y.as_slice()[1..], &[0.0, 2.0]);
        let mut rng = stream(5, 0);
        for n in [1, 3, 8, 17, 40] {
            let x = random_tensor(&[n], &mut rng);
            let r = random_tensor(&[n], &mut rng);
            let report = check_input_grad(&x, |xi| {
                let mut e = Elu::new();
                let y = e.forward(xi);
                (dot(&y, &r), e.backward(&r))
            });
            assert!(report.max_rel_err < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn pooling_gradients() {
        let mut rng = stream(6, 0);
        for (c, b, l, k) in [(2, 2, 8, 4), (1, 3, 9, 2), (3, 1, 4, 4), (2, 2, 5, 1), (1, 1, 12, 3)] {
            let x = random_tensor(&[c, b, l], &mut rng);
            let mut mp = MaxPool1d::new(k);
            let r = random_tensor(mp.forward(&x).unwrap().shape(), &mut rng);
            let report = check_input_grad(&x, |xi| {
                let mut p = MaxPool1d::new(k);
                let y = p.forward(xi).unwrap();
                (dot(&y, &r), p.backward(&r))
            });
            assert!(report.max_rel_err < 1e-4, "{report:?}");
            let rg = random_tensor(&[b, c], &mut rng);
            let report = check_input_grad(&x, |xi| {
                let mut p = GlobalAvgPool::new();
                let y = p.forward(xi).unwrap();
                (dot(&y, &rg), p.backward(&rg))
            });
            assert!(report.max_rel_err < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn maxpool_drops_remainder() {
        let x = Tensor::from_vec(&[1, 1, 5], vec![1.0, 3.0, 2.0, 0.0, 9.0]);
        let y = MaxPool1d::new(2).forward(&x).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn linear_gradients() {
        let mut rng = stream(7, 0);
        for (b, i, o) in [(1, 1, 1), (3, 4, 2), (5, 2, 6), (2, 7, 3), (4, 3, 3)] {
            let mut lin = Linear::<f64>::new(i, o, &mut rng);
            lin.bias.value = random_tensor(&[o], &mut rng);
            let x = random_tensor(&[b, i], &mut rng);
            let r = random_tensor(&[b, o], &mut rng);
            let report = check_params(&mut lin, |m, grad| {
                let y = m.forward(&x).unwrap();
                if grad {
                    m.backward(&r);
                }
                dot(&y, &r)
            });
            assert!(report.max_rel_err < 1e-4, "{report:?}");
            let report = check_input_grad(&x, |xi| {
                let mut m = lin.clone();
                let y = m.forward(xi).unwrap();
                (dot(&y, &r), m.backward(&r))
            });
            assert!(report.max_rel_err < 1e-4, "{report:?}");
        }
    }
}
