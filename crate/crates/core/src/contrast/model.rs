use rand::Rng;

use super::infonce::{info_nce_with_grad, NegativeSets};
use super::subject::{subject_ce_loss, subject_confusion_reg};
use super::{LossConfig, LossVariant, KeyQueue, Temperature};
use crate::error::{Error, Result};
use crate::nn::{
    l2_normalize_rows, l2_normalize_rows_backward, zero_grad, Checkpoint, Encoder, EncoderConfig, Mode, ProjectionHead,
    SubjectClassifier,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const PROJECTION_HIDDEN: usize = 128;
pub const PROJECTION_DIM: usize = 64;

/// Online encoder and head, their momentum copies, the temperature and the
/// optional subject classifier.
#[derive(Debug, Clone)]
pub struct SslModel<T> {
    pub g: Encoder<T>,
    pub f: ProjectionHead<T>,
    pub gk: Encoder<T>,
    pub fk: ProjectionHead<T>,
    pub csub: Option<SubjectClassifier<T>>,
    pub temperature: Temperature<T>,
    /// Sorted subject ids; position is the classifier's class index.
    pub subjects: Vec<u32>,
}

/// Query-branch activations kept between the forward pass and the losses.
#[derive(Debug, Clone)]
pub struct QueryState<T> {
    pub h: Tensor<T>,
    pub q: Tensor<T>,
    q_norms: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GfLosses<T> {
    /// `InfoNCE + λ r_sub`.
    pub loss: T,
    pub infonce: T,
    /// Present when the confusion term is active (λ > 0).
    pub rsub: Option<T>,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct StepLosses<T> {
    pub gf: GfLosses<T>,
    pub loss_c: Option<T>,
    pub keys: Tensor<T>,
}

impl<T: Scalar> SslModel<T> {
    pub fn new<R: Rng + ?Sized>(enc: &EncoderConfig, loss: &LossConfig, subjects: &[u32], rng: &mut R) -> Result<Self> {
        loss.validate()?;
        let g = Encoder::new(enc, rng)?;
        let f = ProjectionHead::new(enc.embed_dim, PROJECTION_HIDDEN, PROJECTION_DIM, rng);
        let mut subjects = subjects.to_vec();
        subjects.sort_unstable();
        subjects.dedup();
        let csub = match loss.variant {
            LossVariant::SubjectInvariant => Some(SubjectClassifier::new(enc.embed_dim, loss.classifier_hidden, subjects.len(), rng)?),
            _ => None,
        };
        Ok(Self { gk: g.clone(), fk: f.clone(), g, f, csub, temperature: Temperature::new(loss.tau_init), subjects })
    }

    pub fn subject_index(&self, id: u32) -> Result<usize> {
        self.subjects.binary_search(&id).map_err(|_| Error::Range(format!("subject {id} unknown to the model")))
    }

    pub fn subject_indices(&self, ids: &[u32]) -> Result<Vec<usize>> {
        ids.iter().map(|&s| self.subject_index(s)).collect()
    }

    /// `q = normalize(F(G(x)))` in train mode, caching for backward.
    pub fn encode_query(&mut self, x: &Tensor<T>) -> Result<QueryState<T>> {
        let h = self.g.forward(x, Mode::Train)?;
        let (q, q_norms) = l2_normalize_rows(&self.f.forward(&h)?)?;
        Ok(QueryState { h, q, q_norms })
    }

    /// `k = normalize(F_k(G_k(x)))`. The key encoder runs in train mode with its
    /// own batch statistics; nothing is backpropagated through it.
    pub fn encode_keys(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.gk.forward(x, Mode::Train)?;
        Ok(l2_normalize_rows(&self.fk.forward(&h)?)?.0)
    }

    /// Subject cross-entropy on the detached embeddings; gradients reach only
    /// the classifier. Returns `None` without a classifier.
    pub fn classifier_grads(&mut self, h: &Tensor<T>, targets: &[usize]) -> Result<Option<T>> {
        let Some(c) = self.csub.as_mut() else { return Ok(None) };
        zero_grad(c);
        let p = c.forward(h)?;
        let (loss, dp) = subject_ce_loss(&p, targets)?;
        c.backward(&dp);
        Ok(Some(loss))
    }

    /// InfoNCE (variant negatives) plus `λ r_sub` with the classifier frozen.
    /// Zeroes and fills the gradients of `G`, `F` and `log τ`; leaves the
    /// classifier gradients zero.
    pub fn online_grads(
        &mut self,
        state: &QueryState<T>,
        keys: &Tensor<T>,
        subject_ids: &[u32],
        queue: &KeyQueue<T>,
        cfg: &LossConfig,
    ) -> Result<GfLosses<T>> {
        zero_grad(&mut self.g);
        zero_grad(&mut self.f);
        zero_grad(&mut self.temperature);
        let bank = queue.bank();
        let sets = match cfg.variant {
            LossVariant::SubjectSpecific => NegativeSets::PerAnchor(
                subject_ids.iter().map(|&s| queue.subject_negatives_or_skip(s, cfg.min_negatives)).collect(),
            ),
            _ => NegativeSets::Shared,
        };
        let tau = self.temperature.tau();
        let nce = info_nce_with_grad(&state.q, keys, &bank, &sets, tau)?;
        self.temperature.log_tau.grad.as_mut_slice()[0] = nce.dlog_tau;

        let lambda = cfg.effective_lambda();
        let mut loss = nce.loss;
        let mut rsub = None;
        let mut dh_adv = None;
        if lambda > 0.0 {
            let targets = self.subject_indices(subject_ids)?;
            let c = self.csub.as_mut().ok_or_else(|| Error::Config("subject-invariant loss without a classifier".into()))?;
            let p = c.forward(&state.h)?;
            let (r, dp) = subject_confusion_reg(&p, &targets)?;
            let mut dh = c.backward(&dp);
            zero_grad(c);
            dh.as_mut_slice().iter_mut().for_each(|v| *v *= T::lit(lambda));
            loss += T::lit(lambda) * r;
            rsub = Some(r);
            dh_adv = Some(dh);
        }

        let dz = l2_normalize_rows_backward(&state.q, &state.q_norms, &nce.dq);
        let mut dh = self.f.backward(&dz);
        if let Some(adv) = dh_adv {
            dh.axpy(T::one(), &adv);
        }
        self.g.backward(&dh);
        Ok(GfLosses { loss, infonce: nce.loss, rsub, skipped: nce.skipped })
    }

    /// Stores all parameters and buffers under `G.`, `F.`, `Gk.`, `Fk.`, `C.`
    /// and the scalar `log_tau`.
    pub fn save_into(&self, ck: &mut Checkpoint) {
        ck.insert_module("G", &self.g);
        ck.insert_module("F", &self.f);
        ck.insert_module("Gk", &self.gk);
        ck.insert_module("Fk", &self.fk);
        if let Some(c) = &self.csub {
            ck.insert_module("C", c);
        }
        ck.insert("log_tau", &self.temperature.log_tau.value);
    }

    pub fn load_from(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.load_module("G", &mut self.g)?;
        ck.load_module("F", &mut self.f)?;
        ck.load_module("Gk", &mut self.gk)?;
        ck.load_module("Fk", &mut self.fk)?;
        if let Some(c) = &mut self.csub {
            ck.load_module("C", c)?;
        }
        let lt = ck.get::<T>("log_tau")?;
        if !lt.shape().is_empty() {
            return Err(Error::Checkpoint("log_tau must be a scalar".into()));
        }
        self.temperature.log_tau.value = lt;
        Ok(())
    }
}

/// Both objectives on one batch with the current parameters: `loss_GF` with
/// gradients in `G`, `F`, `log τ`, and `loss_C` on detached embeddings with
/// gradients in the classifier only. No parameters are updated.
pub fn combined_ssl_step_losses<T: Scalar>(
    model: &mut SslModel<T>,
    query_view: &Tensor<T>,
    key_view: &Tensor<T>,
    subject_ids: &[u32],
    queue: &KeyQueue<T>,
    cfg: &LossConfig,
) -> Result<StepLosses<T>> {
    let state = model.encode_query(query_view)?;
    let keys = model.encode_keys(key_view)?;
    let gf = model.online_grads(&state, &keys, subject_ids, queue, cfg)?;
    let loss_c = match model.csub {
        Some(_) => model.classifier_grads(&state.h, &model.subject_indices(subject_ids)?)?,
        None => None,
    };
    Ok(StepLosses { gf, loss_c, keys })
}
