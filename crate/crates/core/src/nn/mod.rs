//! Layers with hand-written backward passes, the encoder `G`, the projection
//! head `F`, the subject classifier and checkpoint I/O.
//!
//! Every layer caches what its backward pass needs during `forward`, and
//! `backward` accumulates into the parameter gradients. Inside the
//! convolutional trunk activations are laid out `[channels, batch, time]` so
//! that a whole batch is one matrix product per convolution.

mod checkpoint;
mod encoder;
pub mod gradcheck;
mod heads;
mod layers;
mod ops;
mod resblock;

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use checkpoint::Checkpoint;
pub use encoder::{Encoder, EncoderConfig, EncoderVariant, StageConfig};
pub use heads::{softmax_backward, softmax_rows, ProjectionHead, SubjectClassifier};
pub use layers::{BatchNorm1d, Conv1d, Elu, GlobalAvgPool, Linear, MaxPool1d, BN_EPS, BN_MOMENTUM};
pub use ops::{l2_normalize, l2_normalize_rows, l2_normalize_rows_backward};
pub use resblock::ResBlock;

/// Trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in BN, running statistics updated.
    Train,
    /// Running statistics in BN, nothing updated.
    Eval,
}

pub enum Slot<'a, T> {
    Param(&'a Param<T>),
    Buffer(&'a Tensor<T>),
}

pub enum SlotMut<'a, T> {
    Param(&'a mut Param<T>),
    Buffer(&'a mut Tensor<T>),
}

/// Named state traversal. Visit order is fixed and identical between
/// `visit` and `visit_mut`.
pub trait Module<T: Scalar> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, SlotMut<'_, T>));
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn param_count<T: Scalar, M: Module<T> + ?Sized>(m: &M) -> usize {
    let mut n = 0;
    m.visit("", &mut |_, s| {
        if let Slot::Param(p) = s {
            n += p.value.len();
        }
    });
    n
}

pub fn zero_grad<T: Scalar, M: Module<T> + ?Sized>(m: &mut M) {
    m.visit_mut("", &mut |_, s| {
        if let SlotMut::Param(p) = s {
            p.zero_grad();
        }
    });
}

/// Parameter values (no buffers) in visit order.
pub fn param_values<T: Scalar, M: Module<T> + ?Sized>(m: &M) -> Vec<(String, Tensor<T>)> {
    let mut out = Vec::new();
    m.visit("", &mut |name, s| {
        if let Slot::Param(p) = s {
            out.push((name.to_string(), p.value.clone()));
        }
    });
    out
}

/// Parameters and buffers keyed by name.
pub fn state_dict<T: Scalar, M: Module<T> + ?Sized>(m: &M) -> BTreeMap<String, Tensor<T>> {
    let mut out = BTreeMap::new();
    m.visit("", &mut |name, s| {
        let t = match s {
            Slot::Param(p) => p.value.clone(),
            Slot::Buffer(b) => b.clone(),
        };
        out.insert(name.to_string(), t);
    });
    out
}

/// Overwrites every parameter and buffer of `m` from `state`. Names must match
/// exactly and shapes must agree; all mismatches are listed in the error.
pub fn load_state_dict<T: Scalar, M: Module<T> + ?Sized>(m: &mut M, state: &BTreeMap<String, Tensor<T>>) -> Result<()> {
    let mut problems = Vec::new();
    let mut seen = 0usize;
    m.visit("", &mut |name, s| {
        let shape = match &s {
            Slot::Param(p) => p.value.shape().to_vec(),
            Slot::Buffer(b) => b.shape().to_vec(),
        };
        match state.get(name) {
            None => problems.push(format!("{name}: missing")),
            Some(t) if t.shape() != shape.as_slice() => {
                problems.push(format!("{name}: expected shape {shape:?}, found {:?}", t.shape()))
            }
            Some(_) => seen += 1,
        }
    });
    if seen != state.len() {
        let mut known = std::collections::BTreeSet::new();
        m.visit("", &mut |name, _| {
            known.insert(name.to_string());
        });
        problems.extend(state.keys().filter(|k| !known.contains(*k)).map(|k| format!("{k}: unexpected")));
    }
    if !problems.is_empty() {
        return Err(Error::Shape(format!("state mismatch: {}", problems.join("; "))));
    }
    m.visit_mut("", &mut |name, s| {
        let src = &state[name];
        match s {
            SlotMut::Param(p) => p.value = src.clone(),
            SlotMut::Buffer(b) => *b = src.clone(),
        }
    });
    Ok(())
}

/// SHA-256 over names, shapes and values of all parameters and buffers.
pub fn state_hash<T: Scalar, M: Module<T> + ?Sized>(m: &M) -> String {
    let mut h = Sha256::new();
    m.visit("", &mut |name, s| {
        let t = match s {
            Slot::Param(p) => &p.value,
            Slot::Buffer(b) => b,
        };
        h.update(name.as_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for &v in t.as_slice() {
            h.update(v.to_f64_lossy().to_le_bytes());
        }
    });
    hex::encode(h.finalize())
}

/// Largest absolute gradient entry, or `None` if any gradient is non-finite.
pub fn grad_max_abs<T: Scalar, M: Module<T> + ?Sized>(m: &M) -> Option<f64> {
    let mut worst = 0.0f64;
    let mut finite = true;
    m.visit("", &mut |_, s| {
        if let Slot::Param(p) = s {
            for &g in p.grad.as_slice() {
                let g = g.to_f64_lossy();
                finite &= g.is_finite();
                worst = worst.max(g.abs());
            }
        }
    });
    finite.then_some(worst)
}

/// Kaiming-uniform weights for fan-in `fan_in`: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
pub(crate) fn kaiming_uniform<T: Scalar, R: rand::Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit((2.0 * rng.random::<f64>() - 1.0) * bound)).collect();
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn state_round_trip_and_mismatch_report() {
        let mut rng = stream(0, 0);
        let a = Linear::<f64>::new(3, 2, &mut rng);
        let mut b = Linear::<f64>::new(3, 2, &mut rng);
        assert_ne!(state_hash(&a), state_hash(&b));
        load_state_dict(&mut b, &state_dict(&a)).unwrap();
        assert_eq!(state_hash(&a), state_hash(&b));

        let mut c = Linear::<f64>::new(4, 2, &mut rng);
        let err = load_state_dict(&mut c, &state_dict(&a)).unwrap_err().to_string();
        assert!(err.contains("weight: expected shape [2, 4], found [2, 3]"), "{err}");
    }

    #[test]
    fn unexpected_names_are_reported() {
        let mut rng = stream(0, 0);
        let mut a = Linear::<f64>::new(3, 2, &mut rng);
        let mut st = state_dict(&a);
        st.insert("extra".into(), Tensor::zeros(&[1]));
        let err = load_state_dict(&mut a, &st).unwrap_err().to_string();
        assert!(err.contains("extra: unexpected"));
    }
}
