use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Sensor layout: one normalized `(u, v)` coordinate in `[0,1]^2` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Montage {
    coords: Vec<[f64; 2]>,
}

impl Montage {
    pub fn new(coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("montage needs at least one sensor".into()));
        }
        if let Some(c) = coords.iter().find(|c| !c.iter().all(|v| (0.0..=1.0).contains(v))) {
            return Err(Error::InvalidInput(format!("montage coordinate {c:?} outside [0,1]^2")));
        }
        Ok(Self { coords })
    }

    /// Row-major `rows x cols` grid spanning the unit square, truncated to `n` sensors.
    pub fn grid(n: usize) -> Self {
        let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
        let rows = n.div_ceil(cols);
        let step = |k: usize, count: usize| if count <= 1 { 0.5 } else { k as f64 / (count - 1) as f64 };
        let coords = (0..n).map(|i| [step(i % cols, cols), step(i / cols, rows)]).collect();
        Self { coords }
    }

    /// Builds the montage for `channels` from a `name -> [u, v]` map.
    pub fn from_map(map: &BTreeMap<String, [f64; 2]>, channels: &[String]) -> Result<Self> {
        let coords = channels
            .iter()
            .map(|ch| map.get(ch).copied().ok_or_else(|| Error::InvalidInput(format!("montage has no sensor {ch:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(coords)
    }

    pub fn load(path: impl AsRef<Path>, channels: &[String]) -> Result<Self> {
        let map: BTreeMap<String, [f64; 2]> = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_map(&map, channels)
    }

    pub fn to_map(&self, channels: &[String]) -> BTreeMap<String, [f64; 2]> {
        channels.iter().cloned().zip(self.coords.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.coords.len() as f64;
        let (u, v) = self.coords.iter().fold((0.0, 0.0), |(u, v), c| (u + c[0], v + c[1]));
        [u / n, v / n]
    }
}
