//! Checkpoint container: an 8-byte little-endian header length, a JSON header
//! mapping each tensor name to `{shape, dtype, offset}`, then the raw float32
//! little-endian blobs. Offsets count bytes from the start of the blob region.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{state_dict, load_state_dict, Module};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderEntry {
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn insert<T: Scalar>(&mut self, name: &str, t: &Tensor<T>) {
        let data = t.as_slice().iter().map(|v| v.to_f64_lossy() as f32).collect();
        self.tensors.insert(name.to_string(), (t.shape().to_vec(), data));
    }

    pub fn insert_scalar(&mut self, name: &str, value: f64) {
        self.tensors.insert(name.to_string(), (Vec::new(), vec![value as f32]));
    }

    pub fn get<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        let (shape, data) = self.tensors.get(name).ok_or_else(|| corrupt(format!("missing tensor `{name}`")))?;
        Ok(Tensor::from_vec(shape, data.iter().map(|&v| T::lit(v as f64)).collect()))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        match self.tensors.get(name) {
            Some((shape, data)) if shape.is_empty() => Ok(data[0] as f64),
            Some((shape, _)) => Err(corrupt(format!("`{name}` has shape {shape:?}, expected a scalar"))),
            None => Err(corrupt(format!("missing scalar `{name}`"))),
        }
    }

    /// Stores every parameter and buffer of `m` under `prefix.`.
    pub fn insert_module<T: Scalar, M: Module<T> + ?Sized>(&mut self, prefix: &str, m: &M) {
        for (name, t) in state_dict(m) {
            self.insert(&format!("{prefix}.{name}"), &t);
        }
    }

    /// Loads `m` from the entries under `prefix.`; any name or shape
    /// disagreement is reported in full.
    pub fn load_module<T: Scalar, M: Module<T> + ?Sized>(&self, prefix: &str, m: &mut M) -> Result<()> {
        let lead = format!("{prefix}.");
        let mut state = BTreeMap::new();
        for (name, (shape, data)) in self.tensors.range(lead.clone()..) {
            let Some(rest) = name.strip_prefix(&lead) else { break };
            state.insert(rest.to_string(), Tensor::from_vec(shape, data.iter().map(|&v| T::lit(v as f64)).collect()));
        }
        load_state_dict(m, &state).map_err(|e| match e {
            Error::Shape(msg) => corrupt(format!("`{prefix}` does not match the model: {msg}")),
            other => other,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = BTreeMap::new();
        let mut offset = 0u64;
        for (name, (shape, data)) in &self.tensors {
            header.insert(name.clone(), HeaderEntry { shape: shape.clone(), dtype: "f32".into(), offset });
            offset += 4 * data.len() as u64;
        }
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + json.len() + offset as usize);
        out.extend((json.len() as u64).to_le_bytes());
        out.extend(json);
        for (_, data) in self.tensors.values() {
            for v in data {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(corrupt("file shorter than its header length"));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body = 8usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| corrupt("header length exceeds file size"))?;
        let header: BTreeMap<String, HeaderEntry> =
            serde_json::from_slice(&bytes[8..body]).map_err(|e| corrupt(format!("bad header: {e}")))?;
        let blob = &bytes[body..];
        let mut tensors = BTreeMap::new();
        for (name, e) in header {
            if e.dtype != "f32" {
                return Err(corrupt(format!("`{name}` has unsupported dtype {}", e.dtype)));
            }
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let end = start
                .checked_add(4 * n)
                .filter(|&end| end <= blob.len())
                .ok_or_else(|| corrupt(format!("`{name}` runs past the end of the file")))?;
            let data = blob[start..end].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.insert(name, (e.shape, data));
        }
        Ok(Self { tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
