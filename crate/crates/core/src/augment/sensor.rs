use rand::Rng;

use crate::dataio::{Montage, Segment};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Zeroes each channel independently with probability `p`.
pub fn sensor_dropout<T: Scalar, R: Rng + ?Sized>(s: &Segment<T>, p: f64, rng: &mut R) -> Result<Segment<T>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Range(format!("dropout probability {p} outside [0,1]")));
    }
    let mut out = s.clone();
    for ch in 0..s.channels() {
        if rng.random::<f64>() < p {
            out.channel_mut(ch).fill(T::zero());
        }
    }
    Ok(out)
}

/// Channels whose sensor lies within `radius` of `center`.
pub fn sensors_within(montage: &Montage, center: [f64; 2], radius: f64) -> Vec<usize> {
    montage
        .coords()
        .iter()
        .enumerate()
        .filter(|(_, p)| ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt() <= radius)
        .map(|(i, _)| i)
        .collect()
}

/// Zeroes every channel within `radius` of a center drawn uniformly in `[0,1]^2`.
/// Radius zero is the identity.
pub fn sensor_cutout<T: Scalar, R: Rng + ?Sized>(
    s: &Segment<T>,
    montage: &Montage,
    radius: f64,
    rng: &mut R,
) -> Result<Segment<T>> {
    if montage.len() != s.channels() {
        return Err(Error::Shape(format!("montage has {} sensors, segment {} channels", montage.len(), s.channels())));
    }
    if !(radius >= 0.0) {
        return Err(Error::Range(format!("cutout radius {radius} must be >= 0")));
    }
    let center = [rng.random::<f64>(), rng.random::<f64>()];
    let mut out = s.clone();
    if radius > 0.0 {
        for ch in sensors_within(montage, center, radius) {
            out.channel_mut(ch).fill(T::zero());
        }
    }
    Ok(out)
}
