//! Spatial rotation and shift by radial-basis-function resampling of the
//! sensor field at every time sample.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Montage, Segment};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const RIDGE: f64 = 1e-8;
const DUPLICATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarpKind {
    /// Magnitude in degrees.
    Rotation,
    /// Magnitude in normalized montage units.
    Shift,
}

/// Gaussian RBF interpolant with a constant term over fixed sensor sites.
///
/// Solves `[K + ridge I, 1; 1^T, 0] [w; c] = [f; 0]` once; evaluation at new
/// sites is then a fixed linear map of the nodal values.
#[derive(Debug, Clone)]
pub struct RbfInterpolator {
    sites: Vec<[f64; 2]>,
    shape: f64,
    /// Inverse of the augmented system, restricted to the columns multiplying `f`.
    solve: DMatrix<f64>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl RbfInterpolator {
    pub fn new(sites: &[[f64; 2]]) -> Result<Self> {
        let n = sites.len();
        if n == 0 {
            return Err(Error::InvalidInput("no interpolation sites".into()));
        }
        let mut nearest = Vec::with_capacity(n);
        for i in 0..n {
            let mut best = f64::INFINITY;
            for j in 0..n {
                if i != j {
                    let d = dist(sites[i], sites[j]);
                    if d < DUPLICATE_TOL {
                        return Err(Error::Singular(format!("sensors {i} and {j} share coordinates {:?}", sites[i])));
                    }
                    best = best.min(d);
                }
            }
            nearest.push(best);
        }
        let shape = if n == 1 {
            1.0
        } else {
            nearest.sort_by(f64::total_cmp);
            let mid = n / 2;
            if n % 2 == 1 {
                nearest[mid]
            } else {
                0.5 * (nearest[mid - 1] + nearest[mid])
            }
        };
        let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = kernel(dist(sites[i], sites[j]), shape);
            }
            a[(i, i)] += RIDGE;
            a[(i, n)] = 1.0;
            a[(n, i)] = 1.0;
        }
        let inv = a.try_inverse().ok_or_else(|| Error::Singular("interpolation system is not invertible".into()))?;
        let solve = inv.columns(0, n).into_owned();
        Ok(Self { sites: sites.to_vec(), shape, solve })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// Matrix `M` with `values_at(points) = M * nodal_values`.
    pub fn resampling_matrix(&self, points: &[[f64; 2]]) -> DMatrix<f64> {
        let n = self.sites.len();
        let mut basis = DMatrix::<f64>::zeros(points.len(), n + 1);
        for (r, &p) in points.iter().enumerate() {
            for (c, &s) in self.sites.iter().enumerate() {
                basis[(r, c)] = kernel(dist(p, s), self.shape);
            }
            basis[(r, n)] = 1.0;
        }
        basis * &self.solve
    }

    pub fn interpolate(&self, values: &[f64], points: &[[f64; 2]]) -> Vec<f64> {
        let m = self.resampling_matrix(points);
        (m * DVector::from_column_slice(values)).iter().copied().collect()
    }
}

fn kernel(r: f64, shape: f64) -> f64 {
    (-(r / shape).powi(2)).exp()
}

/// Rotates `coords` about `center` by `degrees` (counter-clockwise).
pub fn rotate_coords(coords: &[[f64; 2]], center: [f64; 2], degrees: f64) -> Vec<[f64; 2]> {
    let (s, c) = (degrees * PI / 180.0).sin_cos();
    coords
        .iter()
        .map(|p| {
            let (du, dv) = (p[0] - center[0], p[1] - center[1]);
            [center[0] + c * du - s * dv, center[1] + s * du + c * dv]
        })
        .collect()
}

fn clamp_unit(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)]
}

/// Resamples `s` so that each sensor reads the field at its inverse-transformed
/// location. The transform is drawn uniformly: an angle in `[-mag, mag]` degrees
/// about the montage centroid, or a shift vector uniform in the disk of radius `mag`.
pub fn spatial_warp<T: Scalar, R: Rng + ?Sized>(
    s: &Segment<T>,
    montage: &Montage,
    kind: WarpKind,
    magnitude: f64,
    rng: &mut R,
) -> Result<Segment<T>> {
    if montage.len() != s.channels() {
        return Err(Error::Shape(format!("montage has {} sensors, segment {} channels", montage.len(), s.channels())));
    }
    if !(magnitude >= 0.0) {
        return Err(Error::Range(format!("warp magnitude {magnitude} must be >= 0")));
    }
    let sites = montage.coords();
    let eval: Vec<[f64; 2]> = match kind {
        WarpKind::Rotation => {
            let angle = (2.0 * rng.random::<f64>() - 1.0) * magnitude;
            rotate_coords(sites, montage.centroid(), -angle)
        }
        WarpKind::Shift => {
            let r = magnitude * rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            let (du, dv) = (r * theta.cos(), r * theta.sin());
            sites.iter().map(|p| [p[0] - du, p[1] - dv]).collect()
        }
    };
    let eval: Vec<_> = eval.into_iter().map(clamp_unit).collect();
    let rbf = RbfInterpolator::new(sites)?;
    Ok(resample(s, &rbf.resampling_matrix(&eval)))
}

fn resample<T: Scalar>(s: &Segment<T>, m: &DMatrix<f64>) -> Segment<T> {
    let (c, w) = (s.channels(), s.len());
    let mt: Vec<T> = (0..c * c).map(|i| T::lit(m[(i / c, i % c)])).collect();
    let mut out = vec![T::zero(); c * w];
    T::gemm(c, c, w, T::one(), &mt, c, 1, s.data.as_slice(), w, 1, T::zero(), &mut out, w, 1);
    s.with_data(Tensor::from_vec(&[c, w], out))
}
