//! Contrastive and adversarial objectives: InfoNCE over a momentum key queue,
//! subject-specific negatives and the subject-confusion penalty.

mod infonce;
mod model;
mod queue;
mod subject;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{join, param_values, Module, Param, Slot, SlotMut};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use infonce::{info_nce, info_nce_with_grad, InfoNce, NegativeSets, NORM_TOL};
pub use model::{combined_ssl_step_losses, GfLosses, QueryState, SslModel, StepLosses, PROJECTION_DIM, PROJECTION_HIDDEN};
pub use queue::KeyQueue;
pub use subject::{subject_ce_loss, subject_confusion_reg, PROB_CLAMP};

pub const TAU_MIN: f64 = 0.01;
pub const TAU_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Base,
    SubjectSpecific,
    SubjectInvariant,
}

impl LossVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::SubjectSpecific => "subject_specific",
            Self::SubjectInvariant => "subject_invariant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Weight of the subject-confusion term; only used by `subject_invariant`.
    pub lambda: f64,
    /// Key-encoder momentum `m`.
    pub momentum: f64,
    pub queue_capacity: usize,
    pub tau_init: f64,
    /// Subject-specific anchors with fewer same-subject keys are skipped.
    pub min_negatives: usize,
    /// Width of the subject classifier's hidden layer.
    pub classifier_hidden: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::Base,
            lambda: 1.0,
            momentum: 0.999,
            queue_capacity: 24_000,
            tau_init: 0.07,
            min_negatives: 16,
            classifier_hidden: 128,
        }
    }
}

impl LossConfig {
    /// Errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", format!("must be a finite value >= 0, got {}", self.lambda));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return bad("momentum", format!("must lie in (0, 1), got {}", self.momentum));
        }
        if self.queue_capacity == 0 {
            return bad("queue_capacity", "must be positive".into());
        }
        if !(TAU_MIN..=TAU_MAX).contains(&self.tau_init) {
            return bad("tau_init", format!("must lie in [{TAU_MIN}, {TAU_MAX}], got {}", self.tau_init));
        }
        if self.classifier_hidden == 0 {
            return bad("classifier_hidden", "must be positive".into());
        }
        Ok(())
    }

    /// λ actually applied to the loss: zero unless the variant is subject-invariant.
    pub fn effective_lambda(&self) -> f64 {
        if self.variant == LossVariant::SubjectInvariant {
            self.lambda
        } else {
            0.0
        }
    }
}

/// Learnable temperature stored as `log τ`, kept inside `[TAU_MIN, TAU_MAX]`.
#[derive(Debug, Clone)]
pub struct Temperature<T> {
    pub log_tau: Param<T>,
}

impl<T: Scalar> Temperature<T> {
    pub fn new(tau: f64) -> Self {
        let mut t = Self { log_tau: Param::new(Tensor::scalar(T::lit(tau.ln()))) };
        t.clamp();
        t
    }

    pub fn tau(&self) -> T {
        self.log_tau.value.as_slice()[0].exp()
    }

    pub fn clamp(&mut self) {
        let v = &mut self.log_tau.value.as_mut_slice()[0];
        *v = v.max(T::lit(TAU_MIN.ln())).min(T::lit(TAU_MAX.ln()));
    }
}

impl<T: Scalar> Module<T> for Temperature<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        f(&join(prefix, "log_tau"), Slot::Param(&self.log_tau));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, SlotMut<'_, T>)) {
        f(&join(prefix, "log_tau"), SlotMut::Param(&mut self.log_tau));
    }
}

/// `θ_k ← m θ_k + (1 − m) θ` over every parameter. Buffers (BN running
/// statistics) are left alone; the key encoder keeps its own.
pub fn momentum_update<T: Scalar, M: Module<T> + ?Sized>(key: &mut M, online: &M, m: T) -> Result<()> {
    let src = param_values(online);
    let dst = param_values(key);
    let same = src.len() == dst.len() && src.iter().zip(&dst).all(|((a, x), (b, y))| a == b && x.shape() == y.shape());
    if !same {
        let describe = |v: &[(String, Tensor<T>)]| v.iter().map(|(n, t)| format!("{n}{:?}", t.shape())).collect::<Vec<_>>().join(", ");
        return Err(Error::Shape(format!("momentum update between different architectures: [{}] vs [{}]", describe(&dst), describe(&src))));
    }
    let one_minus = T::one() - m;
    let mut i = 0;
    key.visit_mut("", &mut |_, s| {
        if let SlotMut::Param(p) = s {
            for (k, &o) in p.value.as_mut_slice().iter_mut().zip(src[i].1.as_slice()) {
                *k = m * *k + one_minus * o;
            }
            i += 1;
        }
    });
    Ok(())
}
