use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::sampling::{class_balanced_weights, class_counts, epoch_order, BalancedSampler, SamplingMode, DEFAULT_BETA};
use crate::dataio::Segment;
use crate::error::{Error, Result};
use crate::nn::{softmax_rows, zero_grad, Encoder, Linear, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Features with a spread below this are left unscaled.
const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub sampling: SamplingMode,
    /// β of the class-balanced weights used by `weighted_ce`.
    pub beta: f64,
    /// Use the literal `(1 − β^n)/(1 − β)` weights instead of their reciprocal.
    pub verbatim_formula: bool,
    /// Class whose weight is tied to the majority class.
    pub unknown_class: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 256,
            lr: 1e-3,
            weight_decay: 0.01,
            sampling: SamplingMode::Shuffle,
            beta: DEFAULT_BETA,
            verbatim_formula: false,
            unknown_class: None,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.epochs == 0 {
            return bad("epochs", "must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be a finite value > 0, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", format!("must be a finite value >= 0, got {}", self.weight_decay));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta", format!("must lie in (0, 1), got {}", self.beta));
        }
        Ok(())
    }
}

/// Logistic regression on z-scored features.
#[derive(Debug, Clone)]
pub struct LinearProbe<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
    pub linear: Linear<T>,
}

impl<T: Scalar> LinearProbe<T> {
    pub fn n_classes(&self) -> usize {
        self.linear.outputs()
    }

    fn standardize(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let d = self.mean.len();
        if x.ndim() != 2 || x.dim(1) != d {
            return Err(Error::Shape(format!("probe expects [rows, {d}] features, got {:?}", x.shape())));
        }
        let mut out = x.clone();
        for row in out.as_mut_slice().chunks_mut(d) {
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.linear.apply(&self.standardize(x)?)
    }

    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(x)?))
    }

    /// The same map as one linear layer on raw features, with the
    /// standardization folded into weights and bias.
    pub fn folded(&self) -> Linear<T> {
        let (o, d) = (self.linear.outputs(), self.linear.inputs());
        let mut lin = Linear::zeros(d, o);
        let w = self.linear.weight.value.as_slice();
        for k in 0..o {
            let mut b = self.linear.bias.value.as_slice()[k];
            for i in 0..d {
                let wi = w[k * d + i] / self.std[i];
                lin.weight.value.as_mut_slice()[k * d + i] = wi;
                b -= wi * self.mean[i];
            }
            lin.bias.value.as_mut_slice()[k] = b;
        }
        lin
    }
}

pub fn argmax_rows<T: Scalar>(x: &Tensor<T>) -> Vec<usize> {
    (0..x.dim(0))
        .map(|i| x.row(i).iter().enumerate().fold(0, |best, (j, &v)| if v > x.row(i)[best] { j } else { best }))
        .collect()
}

/// Percentage of matching entries.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    100.0 * pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Mean of `−Σ_k y_k log p_k` weighted per row by `w / Σw`; returns the loss and `dL/dlogits`.
pub(crate) fn weighted_soft_ce<T: Scalar>(logits: &Tensor<T>, targets: &Tensor<T>, weights: &[f64]) -> (T, Tensor<T>) {
    let p = softmax_rows(logits);
    let k = logits.dim(1);
    let total: f64 = weights.iter().sum();
    let inv = if total > 0.0 { 1.0 / total } else { 0.0 };
    let mut dz = Tensor::zeros(logits.shape());
    let mut loss = T::zero();
    let floor = T::lit(1e-30);
    for (i, &w) in weights.iter().enumerate() {
        let wi = T::lit(w * inv);
        // softmax rows sum to one, so d/dz of −Σ y log p is p·Σy − y
        let ysum: T = targets.row(i).iter().copied().sum();
        for j in 0..k {
            let (pj, yj) = (p.row(i)[j], targets.row(i)[j]);
            if yj != T::zero() {
                loss -= wi * yj * pj.max(floor).ln();
            }
            dz.row_mut(i)[j] = wi * (pj * ysum - yj);
        }
    }
    (loss, dz)
}

pub(crate) fn one_hot<T: Scalar>(labels: &[usize], n_classes: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[labels.len(), n_classes]);
    for (i, &y) in labels.iter().enumerate() {
        t.row_mut(i)[y] = T::one();
    }
    t
}

pub(crate) fn gather_rows<T: Scalar>(x: &Tensor<T>, idx: &[usize]) -> Tensor<T> {
    let w = x.len() / x.dim(0).max(1);
    let mut shape = x.shape().to_vec();
    shape[0] = idx.len();
    let mut data = Vec::with_capacity(idx.len() * w);
    for &i in idx {
        data.extend_from_slice(&x.as_slice()[i * w..(i + 1) * w]);
    }
    Tensor::from_vec(&shape, data)
}

/// Per-row loss weights for `labels` under the configured sampling mode.
pub(crate) fn row_weights(labels: &[usize], n_classes: usize, cfg: &ProbeConfig) -> Result<Vec<f64>> {
    match cfg.sampling {
        SamplingMode::WeightedCe => {
            let w = class_balanced_weights(&class_counts(labels, n_classes)?, cfg.beta, cfg.verbatim_formula, cfg.unknown_class)?;
            Ok(labels.iter().map(|&y| w.weights[y]).collect())
        }
        _ => Ok(vec![1.0; labels.len()]),
    }
}

pub(crate) fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
    let counts = class_counts(labels, n_classes)?;
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidInput(format!("need examples of at least two classes, got counts {counts:?}")));
    }
    Ok(())
}

/// Trains a softmax classifier on `features` `[N, D]`.
pub fn fit_probe<T: Scalar, R: Rng + ?Sized>(
    features: &Tensor<T>,
    labels: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
    rng: &mut R,
) -> Result<LinearProbe<T>> {
    cfg.validate()?;
    if features.ndim() != 2 || features.dim(0) != labels.len() {
        return Err(Error::Shape(format!("{} labels for features {:?}", labels.len(), features.shape())));
    }
    check_labels(labels, n_classes)?;
    let (n, d) = (features.dim(0), features.dim(1));
    let mut mean = vec![0.0f64; d];
    let mut var = vec![0.0f64; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(features.row(i)) {
            *m += v.to_f64_lossy() / n as f64;
        }
    }
    for i in 0..n {
        for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(features.row(i)) {
            *s += (v.to_f64_lossy() - m).powi(2) / n as f64;
        }
    }
    let std: Vec<T> = var.iter().map(|&v| T::lit(if v.sqrt() > STD_FLOOR { v.sqrt() } else { 1.0 })).collect();
    let mut probe = LinearProbe { mean: mean.iter().map(|&m| T::lit(m)).collect(), std, linear: Linear::new(d, n_classes, rng) };
    let x = probe.standardize(features)?;
    let targets = one_hot::<T>(labels, n_classes);
    let weights = row_weights(labels, n_classes, cfg)?;
    let sampler = match cfg.sampling {
        SamplingMode::BalancedResample => Some(BalancedSampler::new(labels, n_classes)?),
        _ => None,
    };
    let mut opt = Adam::new();
    for _ in 0..cfg.epochs {
        let order = epoch_order(n, cfg.sampling, sampler.as_ref(), rng);
        for idx in order.chunks(cfg.batch_size) {
            zero_grad(&mut probe.linear);
            let logits = probe.linear.forward(&gather_rows(&x, idx))?;
            let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
            let (_, dz) = weighted_soft_ce(&logits, &gather_rows(&targets, idx), &w);
            probe.linear.backward(&dz);
            opt.step(&mut [("probe", &mut probe.linear)], cfg.lr, cfg.weight_decay)?;
        }
    }
    Ok(probe)
}

/// Labels of labeled segments; unlabeled ones are an error.
pub fn segment_labels<T: Scalar>(segments: &[Segment<T>]) -> Result<Vec<usize>> {
    segments
        .iter()
        .map(|s| s.label.ok_or_else(|| Error::InvalidInput(format!("segment at {:?} has no label", s.origin))))
        .collect()
}

pub fn stack_segments<T: Scalar>(segments: &[Segment<T>]) -> Tensor<T> {
    let items: Vec<Tensor<T>> = segments.iter().map(|s| s.data.clone()).collect();
    Tensor::stack(&items)
}

/// Eval-mode embeddings `[N, embed_dim]`, computed `batch` segments at a time.
pub fn embed<T: Scalar>(encoder: &mut Encoder<T>, segments: &[Segment<T>], batch: usize) -> Result<Tensor<T>> {
    let d = encoder.embed_dim();
    let mut data = Vec::with_capacity(segments.len() * d);
    for chunk in segments.chunks(batch.max(1)) {
        data.extend(encoder.forward(&stack_segments(chunk), Mode::Eval)?.into_vec());
    }
    Ok(Tensor::from_vec(&[segments.len(), d], data))
}

/// Embeds the labeled segments with the frozen encoder and fits a probe.
pub fn train_probe<T: Scalar, R: Rng + ?Sized>(
    encoder: &mut Encoder<T>,
    segments: &[Segment<T>],
    n_classes: usize,
    cfg: &ProbeConfig,
    rng: &mut R,
) -> Result<LinearProbe<T>> {
    let labels = segment_labels(segments)?;
    check_labels(&labels, n_classes)?;
    let features = embed(encoder, segments, cfg.batch_size)?;
    fit_probe(&features, &labels, n_classes, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_input_grad, random_tensor};
    use crate::rng::stream;

    #[test]
    fn soft_ce_gradient() {
        let mut rng = stream(0, 0);
        for (b, k) in [(1, 2), (3, 3), (4, 5), (2, 4), (6, 2)] {
            let z = random_tensor(&[b, k], &mut rng);
            let mut y = softmax_rows(&random_tensor(&[b, k], &mut rng));
            y.row_mut(0).iter_mut().for_each(|v| *v *= 0.5);
            let w: Vec<f64> = (0..b).map(|i| 0.5 + i as f64).collect();
            let r = check_input_grad(&z, |zz| weighted_soft_ce(zz, &y, &w));
            assert!(r.max_rel_err < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn weighted_loss_is_normalized_by_total_weight() {
        let z = Tensor::from_vec(&[2, 2], vec![0.0f64, 0.0, 0.0, 0.0]);
        let y = one_hot::<f64>(&[0, 1], 2);
        let (l, _) = weighted_soft_ce(&z, &y, &[3.0, 0.5]);
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn separable_toy_data_is_learned() {
        let mut rng = stream(1, 0);
        let n = 200;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut x = random_tensor(&[n, 3], &mut rng);
        for (i, &y) in labels.iter().enumerate() {
            x.row_mut(i)[0] += if y == 1 { 4.0 } else { -4.0 };
        }
        let cfg = ProbeConfig { epochs: 50, batch_size: 32, lr: 1e-2, ..ProbeConfig::default() };
        let probe = fit_probe(&x, &labels, 2, &cfg, &mut rng).unwrap();
        assert!(accuracy(&probe.predict(&x).unwrap(), &labels) >= 99.0);
        let folded = probe.folded().apply(&x).unwrap();
        let direct = probe.logits(&x).unwrap();
        for (a, b) in folded.as_slice().iter().zip(direct.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Tensor::<f64>::zeros(&[4, 2]);
        let err = fit_probe(&x, &[1, 1, 1, 1], 2, &ProbeConfig::default(), &mut stream(0, 0)).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn sampling_modes_train() {
        let mut rng = stream(2, 0);
        let labels: Vec<usize> = (0..120).map(|i| usize::from(i % 10 == 0)).collect();
        let mut x = random_tensor(&[120, 2], &mut rng);
        for (i, &y) in labels.iter().enumerate() {
            x.row_mut(i)[1] += 5.0 * y as f64;
        }
        for sampling in [SamplingMode::BalancedResample, SamplingMode::WeightedCe] {
            let cfg = ProbeConfig { epochs: 40, batch_size: 16, lr: 1e-2, sampling, ..ProbeConfig::default() };
            let p = fit_probe(&x, &labels, 2, &cfg, &mut rng).unwrap();
            assert!(accuracy(&p.predict(&x).unwrap(), &labels) > 95.0, "{sampling:?}");
        }
    }
}
