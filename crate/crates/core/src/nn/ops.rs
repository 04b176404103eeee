use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn l2_normalize<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(Error::InvalidInput(format!("cannot normalize a vector of norm {norm}")));
    }
    Ok(v.iter().map(|&x| x / norm).collect())
}

/// Normalizes each row of `[batch, dim]`; returns the rows and their original norms.
pub fn l2_normalize_rows<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
    if x.ndim() != 2 {
        return Err(Error::Shape(format!("expected [batch, dim], got {:?}", x.shape())));
    }
    let d = x.dim(1);
    let mut out = Vec::with_capacity(x.len());
    let mut norms = Vec::with_capacity(x.dim(0));
    for (i, row) in x.as_slice().chunks(d.max(1)).enumerate().take(x.dim(0)) {
        let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::InvalidInput(format!("row {i} has norm {norm}")));
        }
        out.extend(row.iter().map(|&v| v / norm));
        norms.push(norm);
    }
    Ok((Tensor::from_vec(x.shape(), out), norms))
}

/// `dx = (dy - y (y·dy)) / ‖x‖` per row.
pub fn l2_normalize_rows_backward<T: Scalar>(y: &Tensor<T>, norms: &[T], dy: &Tensor<T>) -> Tensor<T> {
    let d = y.dim(1);
    let mut out = Vec::with_capacity(y.len());
    for ((yr, gr), &n) in y.as_slice().chunks(d).zip(dy.as_slice().chunks(d)).zip(norms) {
        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        out.extend(yr.iter().zip(gr).map(|(&a, &b)| (b - a * dot) / n));
    }
    Tensor::from_vec(y.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_input_grad, random_tensor};
    use crate::rng::stream;

    #[test]
    fn examples() {
        assert_eq!(l2_normalize(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        assert_eq!(l2_normalize(&[0.0, 1.0, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(l2_normalize(&[0.0f64, 0.0]).is_err());
        assert!(l2_normalize_rows(&Tensor::<f32>::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn rows_have_unit_norm() {
        let x = random_tensor(&[6, 64], &mut stream(0, 0)).cast::<f32>();
        let (y, _) = l2_normalize_rows(&x).unwrap();
        for row in y.as_slice().chunks(64) {
            assert!((row.iter().map(|v| v * v).sum::<f32>().sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_matches_projector_form() {
        let mut rng = stream(1, 0);
        for (b, d) in [(1, 2), (2, 3), (3, 5), (4, 8), (2, 64)] {
            let x = random_tensor(&[b, d], &mut rng);
            let r = random_tensor(&[b, d], &mut rng);
            let report = check_input_grad(&x, |xi| {
                let (y, n) = l2_normalize_rows(xi).unwrap();
                let v = y.as_slice().iter().zip(r.as_slice()).map(|(a, b)| a * b).sum();
                (v, l2_normalize_rows_backward(&y, &n, &r))
            });
            assert!(report.max_rel_err < 1e-4, "{report:?}");
            // explicit Jacobian (I - v v^T / |v|^2) / |v| applied to r
            let (y, n) = l2_normalize_rows(&x).unwrap();
            let g = l2_normalize_rows_backward(&y, &n, &r);
            for i in 0..b {
                let v = x.row(i);
                let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                for j in 0..d {
                    let mut e = 0.0;
                    for k in 0..d {
                        let id = if j == k { 1.0 } else { 0.0 };
                        e += (id - v[j] * v[k] / (nv * nv)) / nv * r.row(i)[k];
                    }
                    assert!((g.row(i)[j] - e).abs() < 1e-12);
                }
            }
        }
    }
}
