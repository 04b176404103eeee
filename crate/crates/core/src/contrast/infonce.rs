use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Largest tolerated deviation of an input row norm from 1.
pub const NORM_TOL: f64 = 1e-3;

/// Which rows of the negative bank each anchor is contrasted against.
#[derive(Debug, Clone, PartialEq)]
pub enum NegativeSets {
    /// Every anchor uses the whole bank.
    Shared,
    /// Row indices per anchor; `None` skips the anchor.
    PerAnchor(Vec<Option<Vec<usize>>>),
}

/// Loss, gradients and bookkeeping of one InfoNCE evaluation.
#[derive(Debug, Clone)]
pub struct InfoNce<T> {
    /// Mean over non-skipped anchors; zero when every anchor is skipped.
    pub loss: T,
    pub per_anchor: Vec<Option<T>>,
    pub dq: Tensor<T>,
    pub dk: Tensor<T>,
    /// Derivative with respect to `log τ`.
    pub dlog_tau: T,
    pub skipped: usize,
}

pub(crate) fn check_unit_rows<T: Scalar>(x: &Tensor<T>, what: &str, dim: usize) -> Result<()> {
    if x.ndim() != 2 || x.dim(1) != dim {
        return Err(Error::Shape(format!("{what} must be [rows, {dim}], got {:?}", x.shape())));
    }
    for (i, row) in x.as_slice().chunks(dim.max(1)).enumerate().take(x.dim(0)) {
        let n = row.iter().map(|&v| v * v).sum::<T>().sqrt().to_f64_lossy();
        if !((n - 1.0).abs() <= NORM_TOL) {
            return Err(Error::Contract(format!("{what} row {i} has norm {n}, expected 1")));
        }
    }
    Ok(())
}

/// Mean InfoNCE of queries `q` against their positives `k_pos`, with every row
/// of `negatives` as a shared negative.
pub fn info_nce<T: Scalar>(q: &Tensor<T>, k_pos: &Tensor<T>, negatives: &Tensor<T>, tau: T) -> Result<T> {
    Ok(info_nce_with_grad(q, k_pos, negatives, &NegativeSets::Shared, tau)?.loss)
}

/// `ℓ_i = logsumexp(z_i) − z_i0` with `z_i0 = q_i·k_i/τ` and
/// `z_ij = q_i·n_j/τ` over the anchor's negatives.
pub fn info_nce_with_grad<T: Scalar>(
    q: &Tensor<T>,
    k_pos: &Tensor<T>,
    bank: &Tensor<T>,
    sets: &NegativeSets,
    tau: T,
) -> Result<InfoNce<T>> {
    if !(tau > T::zero()) {
        return Err(Error::Contract(format!("temperature {tau} must be positive")));
    }
    if q.ndim() != 2 {
        return Err(Error::Shape(format!("queries must be [batch, dim], got {:?}", q.shape())));
    }
    let (b, d) = (q.dim(0), q.dim(1));
    check_unit_rows(q, "queries", d)?;
    check_unit_rows(k_pos, "positive keys", d)?;
    if k_pos.dim(0) != b {
        return Err(Error::Shape(format!("{b} queries but {} positive keys", k_pos.dim(0))));
    }
    check_unit_rows(bank, "negatives", d)?;
    let n = bank.dim(0);
    if let NegativeSets::PerAnchor(s) = sets {
        if s.len() != b {
            return Err(Error::Shape(format!("{} negative sets for {b} anchors", s.len())));
        }
        if let Some(&bad) = s.iter().flatten().flatten().find(|&&j| j >= n) {
            return Err(Error::Range(format!("negative index {bad} outside bank of {n}")));
        }
    }

    let mut sims = vec![T::zero(); b * n];
    if n > 0 && b > 0 {
        T::gemm(b, d, n, T::one(), q.as_slice(), d, 1, bank.as_slice(), 1, d, T::zero(), &mut sims, n, 1);
    }
    let all: Vec<usize> = (0..n).collect();
    let set_of = |i: usize| -> Option<&[usize]> {
        match sets {
            NegativeSets::Shared => Some(&all),
            NegativeSets::PerAnchor(s) => s[i].as_deref(),
        }
    };
    let used = (0..b).filter(|&i| set_of(i).is_some()).count();

    let inv_tau = T::one() / tau;
    let scale = if used > 0 { T::one() / T::lit(used as f64) } else { T::zero() };
    let mut coef = vec![T::zero(); b * n];
    let mut dq = vec![T::zero(); b * d];
    let mut dk = vec![T::zero(); b * d];
    let mut per_anchor = Vec::with_capacity(b);
    let mut total = T::zero();
    let mut dlog_tau = T::zero();
    let mut z = Vec::new();
    for i in 0..b {
        let Some(set) = set_of(i) else {
            per_anchor.push(None);
            continue;
        };
        let qi = q.row(i);
        let ki = k_pos.row(i);
        let pos: T = qi.iter().zip(ki).map(|(&a, &c)| a * c).sum();
        z.clear();
        z.push(pos * inv_tau);
        z.extend(set.iter().map(|&j| sims[i * n + j] * inv_tau));
        let m = z.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total_exp = T::zero();
        for v in z.iter_mut() {
            *v = (*v - m).exp();
            total_exp += *v;
        }
        let z0 = pos * inv_tau;
        let loss_i = total_exp.ln() + m - z0;
        per_anchor.push(Some(loss_i));
        total += loss_i;

        let c0 = (z[0] / total_exp - T::one()) * scale;
        dlog_tau -= c0 * z0;
        for (r, &j) in set.iter().enumerate() {
            let cj = z[r + 1] / total_exp * scale;
            coef[i * n + j] += cj;
            dlog_tau -= cj * sims[i * n + j] * inv_tau;
        }
        for t in 0..d {
            dq[i * d + t] = c0 * ki[t] * inv_tau;
            dk[i * d + t] = c0 * qi[t] * inv_tau;
        }
    }
    if n > 0 && b > 0 {
        T::gemm(b, n, d, inv_tau, &coef, n, 1, bank.as_slice(), d, 1, T::one(), &mut dq, d, 1);
    }
    Ok(InfoNce {
        loss: total * scale,
        per_anchor,
        dq: Tensor::from_vec(&[b, d], dq),
        dk: Tensor::from_vec(&[b, d], dk),
        dlog_tau,
        skipped: b - used,
    })
}
