use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::probe::{check_labels, one_hot, row_weights, segment_labels, stack_segments, weighted_soft_ce, argmax_rows, ProbeConfig};
use super::sampling::{epoch_order, mixup, BalancedSampler, SamplingMode, DEFAULT_BETA, DEFAULT_MIXUP_ALPHA};
use crate::augment::{apply_pipeline_to_segment, AugmentContext, AugmentPipeline};
use crate::dataio::Segment;
use crate::error::{Error, Result};
use crate::nn::{zero_grad, Encoder, Linear, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub sampling: SamplingMode,
    pub beta: f64,
    pub verbatim_formula: bool,
    pub unknown_class: Option<usize>,
    /// MixUp with `γ ~ Beta(α, α)`; `None` disables it.
    pub mixup_alpha: Option<f64>,
    /// Pass training windows through the augmentation pipeline.
    pub augment: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            lr: 1e-5,
            weight_decay: 0.0,
            sampling: SamplingMode::Shuffle,
            beta: DEFAULT_BETA,
            verbatim_formula: false,
            unknown_class: None,
            mixup_alpha: Some(DEFAULT_MIXUP_ALPHA),
            augment: false,
        }
    }
}

impl FinetuneConfig {
    /// A zero learning rate is allowed and leaves every parameter in place.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.epochs == 0 {
            return bad("epochs", "must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be a finite value >= 0, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", format!("must be a finite value >= 0, got {}", self.weight_decay));
        }
        if let Some(a) = self.mixup_alpha.filter(|a| !(*a > 0.0 && a.is_finite())) {
            return bad("mixup_alpha", format!("must be positive, got {a}"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta", format!("must lie in (0, 1), got {}", self.beta));
        }
        Ok(())
    }

    fn class_weighting(&self) -> ProbeConfig {
        ProbeConfig {
            sampling: self.sampling,
            beta: self.beta,
            verbatim_formula: self.verbatim_formula,
            unknown_class: self.unknown_class,
            ..ProbeConfig::default()
        }
    }
}

/// Encoder with a linear classification head.
#[derive(Debug, Clone)]
pub struct Classifier<T> {
    pub encoder: Encoder<T>,
    pub head: Linear<T>,
}

impl<T: Scalar> Classifier<T> {
    pub fn new(encoder: Encoder<T>, head: Linear<T>) -> Result<Self> {
        if head.inputs() != encoder.embed_dim() {
            return Err(Error::Shape(format!(
                "head takes {} features but the encoder emits {}",
                head.inputs(),
                encoder.embed_dim()
            )));
        }
        Ok(Self { encoder, head })
    }

    /// Eval-mode class predictions.
    pub fn predict(&mut self, segments: &[Segment<T>], batch: usize) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(segments.len());
        for chunk in segments.chunks(batch.max(1)) {
            let h = self.encoder.forward(&stack_segments(chunk), Mode::Eval)?;
            out.extend(argmax_rows(&self.head.apply(&h)?));
        }
        Ok(out)
    }
}

/// Trains encoder and head end to end on labeled segments with soft-target
/// cross-entropy. `augment` supplies the pipeline used when `cfg.augment` is set.
pub fn finetune<T: Scalar, R: Rng + ?Sized>(
    model: &mut Classifier<T>,
    segments: &[Segment<T>],
    cfg: &FinetuneConfig,
    augment: Option<(&AugmentPipeline, &AugmentContext<'_, T>)>,
    rng: &mut R,
) -> Result<()> {
    cfg.validate()?;
    let k = model.head.outputs();
    let labels = segment_labels(segments)?;
    check_labels(&labels, k)?;
    let aug = match (cfg.augment, augment) {
        (true, None) => return Err(Error::Config("augment: enabled but no pipeline supplied".into())),
        (true, Some(a)) => Some(a),
        (false, _) => None,
    };
    let targets = one_hot::<T>(&labels, k);
    let weights = row_weights(&labels, k, &cfg.class_weighting())?;
    let sampler = match cfg.sampling {
        SamplingMode::BalancedResample => Some(BalancedSampler::new(&labels, k)?),
        _ => None,
    };
    let mut opt = Adam::new();
    for _ in 0..cfg.epochs {
        for idx in epoch_order(segments.len(), cfg.sampling, sampler.as_ref(), rng).chunks(cfg.batch_size) {
            let mut views = Vec::with_capacity(idx.len());
            for &i in idx {
                views.push(match aug {
                    Some((p, ctx)) => apply_pipeline_to_segment(&segments[i], p, ctx, rng)?.data,
                    None => segments[i].data.clone(),
                });
            }
            let mut x = Tensor::stack(&views);
            let mut y = super::probe::gather_rows(&targets, idx);
            if let Some(alpha) = cfg.mixup_alpha {
                let mut perm: Vec<usize> = (0..idx.len()).collect();
                rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), rng);
                let y_flat: Vec<f64> = y.as_slice().iter().map(|v| v.to_f64_lossy()).collect();
                let partner_y = super::probe::gather_rows(&y, &perm);
                let partner_flat: Vec<f64> = partner_y.as_slice().iter().map(|v| v.to_f64_lossy()).collect();
                let (mx, my) = mixup(&x, &y_flat, &super::probe::gather_rows(&x, &perm), &partner_flat, alpha, rng)?;
                x = mx;
                y = Tensor::from_vec(y.shape(), my.into_iter().map(T::lit).collect());
            }
            zero_grad(&mut model.encoder);
            zero_grad(&mut model.head);
            let h = model.encoder.forward(&x, Mode::Train)?;
            let logits = model.head.forward(&h)?;
            let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
            let (loss, dz) = weighted_soft_ce(&logits, &y, &w);
            if !loss.is_finite() {
                return Err(Error::NonFinite { step: opt.steps_taken() as usize + 1, detail: format!("fine-tune loss {loss}") });
            }
            let dh = model.head.backward(&dz);
            model.encoder.backward(&dh);
            opt.step(&mut [("G", &mut model.encoder), ("head", &mut model.head)], cfg.lr, cfg.weight_decay)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::SegmentOrigin;
    use crate::nn::{param_values, EncoderConfig};
    use crate::rng::stream;

    fn toy(n: usize, rng: &mut crate::rng::StdRng) -> Vec<Segment<f64>> {
        (0..n)
            .map(|i| {
                let y = i % 2;
                let mut x = crate::nn::gradcheck::random_tensor(&[2, 64], rng);
                for t in 0..64 {
                    x.row_mut(0)[t] += if y == 1 { (t as f64 * 0.8).sin() * 2.0 } else { 0.0 };
                }
                Segment { data: x, subject_id: 0, label: Some(y), origin: SegmentOrigin { recording: 0, start: i } }
            })
            .collect()
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let mut rng = stream(0, 0);
        let enc = Encoder::<f64>::new(&EncoderConfig::desk(2, 64), &mut rng).unwrap();
        let mut model = Classifier::new(enc, Linear::new(256, 2, &mut rng)).unwrap();
        let before = param_values(&model.encoder);
        let cfg = FinetuneConfig { epochs: 2, batch_size: 8, lr: 0.0, ..FinetuneConfig::default() };
        finetune(&mut model, &toy(16, &mut rng), &cfg, None, &mut rng).unwrap();
        assert_eq!(param_values(&model.encoder), before);
    }

    #[test]
    fn head_must_match_encoder() {
        let mut rng = stream(1, 0);
        let enc = Encoder::<f64>::new(&EncoderConfig::desk(2, 64), &mut rng).unwrap();
        assert!(matches!(Classifier::new(enc, Linear::new(128, 2, &mut rng)), Err(Error::Shape(_))));
    }

    #[test]
    fn training_fits_toy_labels() {
        let mut rng = stream(2, 0);
        let enc = Encoder::<f64>::new(&EncoderConfig::desk(2, 64), &mut rng).unwrap();
        let mut model = Classifier::new(enc, Linear::new(256, 2, &mut rng)).unwrap();
        let data = toy(32, &mut rng);
        let cfg = FinetuneConfig { epochs: 30, batch_size: 16, lr: 1e-3, mixup_alpha: None, ..FinetuneConfig::default() };
        finetune(&mut model, &data, &cfg, None, &mut rng).unwrap();
        let pred = model.predict(&data, 16).unwrap();
        let truth = segment_labels(&data).unwrap();
        assert!(super::super::probe::accuracy(&pred, &truth) >= 90.0);
    }

    #[test]
    fn augment_flag_needs_a_pipeline() {
        let mut rng = stream(3, 0);
        let enc = Encoder::<f64>::new(&EncoderConfig::desk(2, 64), &mut rng).unwrap();
        let mut model = Classifier::new(enc, Linear::new(256, 2, &mut rng)).unwrap();
        let cfg = FinetuneConfig { epochs: 1, augment: true, ..FinetuneConfig::default() };
        assert!(finetune(&mut model, &toy(4, &mut rng), &cfg, None, &mut rng).is_err());
    }
}
