//! Portable dataset container: a JSON manifest next to raw little-endian
//! float32 payloads (channel-major) and optional annotation CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Annotation, LabelKind, Recording};
use crate::error::{Error, LoadErrorKind, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub subject_id: u32,
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    pub samples: usize,
    pub data_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations_file: Option<String>,
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let entry = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::load(&entry, LoadErrorKind::MissingFile(path.to_path_buf())),
        _ => Error::load(&entry, e),
    })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::load(entry, LoadErrorKind::Schema(e.to_string())))
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.parent().unwrap_or(Path::new(".")).join(rel)
}

pub fn load_dataset<T: Scalar>(manifest_path: impl AsRef<Path>) -> Result<Vec<Recording<T>>> {
    load_dataset_with_window(manifest_path, None)
}

/// Loads every manifest entry; with `min_window`, recordings shorter than the
/// window are rejected instead of padded.
pub fn load_dataset_with_window<T: Scalar>(
    manifest_path: impl AsRef<Path>,
    min_window: Option<usize>,
) -> Result<Vec<Recording<T>>> {
    let manifest_path = manifest_path.as_ref();
    let entries = read_manifest(manifest_path)?;
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let name = format!("entry {i} ({})", e.data_file);
            load_entry(manifest_path, e, min_window).map_err(|kind| Error::load(name, kind))
        })
        .collect()
}

fn load_entry<T: Scalar>(
    manifest_path: &Path,
    e: &ManifestEntry,
    min_window: Option<usize>,
) -> std::result::Result<Recording<T>, LoadErrorKind> {
    if e.channels.is_empty() {
        return Err(LoadErrorKind::Schema("channels must be non-empty".into()));
    }
    if e.samples == 0 {
        return Err(LoadErrorKind::Schema("samples must be >= 1".into()));
    }
    if !(e.sample_rate_hz > 0.0) {
        return Err(LoadErrorKind::Schema("sample_rate_hz must be positive".into()));
    }
    if let Some(w) = min_window {
        if e.samples < w {
            return Err(LoadErrorKind::TooShort { samples: e.samples, window: w });
        }
    }
    let path = resolve(manifest_path, &e.data_file);
    if !path.is_file() {
        return Err(LoadErrorKind::MissingFile(path));
    }
    let bytes = fs::read(&path)?;
    let c = e.channels.len();
    let expected = (c * e.samples * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(LoadErrorKind::LengthMismatch { expected, actual: bytes.len() as u64 });
    }
    let mut data = Vec::with_capacity(c * e.samples);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(LoadErrorKind::NonFinite(i));
        }
        data.push(T::lit(v as f64));
    }
    let annotations = match &e.annotations_file {
        Some(rel) => {
            let apath = resolve(manifest_path, rel);
            if !apath.is_file() {
                return Err(LoadErrorKind::MissingFile(apath));
            }
            read_annotations(&apath)?
        }
        None => Vec::new(),
    };
    if let Some(a) = annotations.iter().find(|a| a.sample_index >= e.samples) {
        return Err(LoadErrorKind::Annotations(format!(
            "sample_index {} outside [0, {})",
            a.sample_index, e.samples
        )));
    }
    Ok(Recording {
        subject_id: e.subject_id,
        sample_rate_hz: e.sample_rate_hz,
        data: Tensor::from_vec(&[c, e.samples], data),
        channel_names: e.channels.clone(),
        annotations,
    })
}

fn read_annotations(path: &Path) -> std::result::Result<Vec<Annotation>, LoadErrorKind> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| LoadErrorKind::Annotations(e.to_string()))?;
    let headers = reader.headers().map_err(|e| LoadErrorKind::Annotations(e.to_string()))?;
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["sample_index", "kind", "value"] {
        return Err(LoadErrorKind::Annotations(format!("unexpected header {headers:?}")));
    }
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| LoadErrorKind::Annotations(e.to_string()))?;
        let bad = |what: &str| LoadErrorKind::Annotations(format!("row {}: bad {what}", line + 1));
        let sample_index = rec.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("sample_index"))?;
        let kind = rec.get(1).and_then(LabelKind::parse).ok_or_else(|| bad("kind"))?;
        let value = rec.get(2).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("value"))?;
        out.push(Annotation { sample_index, kind, value });
    }
    Ok(out)
}

/// Writes `manifest.json`, one `rec_NNN.f32` payload per recording and an
/// annotation CSV for recordings that carry annotations. Returns the manifest path.
pub fn write_dataset<T: Scalar>(dir: impl AsRef<Path>, recordings: &[Recording<T>]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(recordings.len());
    for (i, rec) in recordings.iter().enumerate() {
        rec.validate()?;
        let data_file = format!("rec_{i:03}.f32");
        let mut bytes = Vec::with_capacity(rec.data.len() * 4);
        for &v in rec.data.as_slice() {
            bytes.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
        fs::write(dir.join(&data_file), bytes)?;
        let annotations_file = if rec.annotations.is_empty() {
            None
        } else {
            let name = format!("rec_{i:03}.csv");
            let mut w = csv::Writer::from_path(dir.join(&name)).map_err(csv_io)?;
            w.write_record(["sample_index", "kind", "value"]).map_err(csv_io)?;
            for a in &rec.annotations {
                w.write_record([a.sample_index.to_string(), a.kind.as_str().to_string(), a.value.to_string()])
                    .map_err(csv_io)?;
            }
            w.flush()?;
            Some(name)
        };
        entries.push(ManifestEntry {
            subject_id: rec.subject_id,
            sample_rate_hz: rec.sample_rate_hz,
            channels: rec.channel_names.clone(),
            samples: rec.samples(),
            data_file,
            annotations_file,
        });
    }
    let manifest = dir.join("manifest.json");
    fs::write(&manifest, serde_json::to_vec_pretty(&entries)?)?;
    Ok(manifest)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// SHA-256 over the manifest bytes followed by every referenced file, in manifest order.
pub fn dataset_hash(manifest_path: impl AsRef<Path>) -> Result<String> {
    let manifest_path = manifest_path.as_ref();
    let entries = read_manifest(manifest_path)?;
    let mut hasher = Sha256::new();
    hasher.update(fs::read(manifest_path)?);
    for e in &entries {
        hasher.update(fs::read(resolve(manifest_path, &e.data_file))?);
        if let Some(a) = &e.annotations_file {
            hasher.update(fs::read(resolve(manifest_path, a))?);
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_recording() -> Recording<f32> {
        let data: Vec<f32> = (0..2000).map(|i| (i as f32 * 0.01).sin()).collect();
        Recording::new(
            3,
            160.0,
            Tensor::from_vec(&[2, 1000], data),
            vec!["C3".into(), "C4".into()],
            vec![Annotation { sample_index: 10, kind: LabelKind::Task, value: 1 }],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_single_recording() {
        let dir = tempfile::tempdir().unwrap();
        let rec = sample_recording();
        let manifest = write_dataset(dir.path(), std::slice::from_ref(&rec)).unwrap();
        let loaded: Vec<Recording<f32>> = load_dataset(&manifest).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].data.shape(), &[2, 1000]);
        assert_eq!(loaded[0], rec);
    }

    #[test]
    fn truncated_payload_is_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(dir.path(), &[sample_recording()]).unwrap();
        let payload = dir.path().join("rec_000.f32");
        let bytes = fs::read(&payload).unwrap();
        fs::write(&payload, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_dataset::<f32>(&manifest).unwrap_err();
        assert!(
            matches!(&err, Error::Load { kind: LoadErrorKind::LengthMismatch { expected: 8000, actual: 7996 }, entry } if entry.contains("rec_000")),
            "{err}"
        );
    }

    #[test]
    fn absent_payload_is_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(dir.path(), &[sample_recording()]).unwrap();
        fs::remove_file(dir.path().join("rec_000.f32")).unwrap();
        let err = load_dataset::<f64>(&manifest).unwrap_err();
        assert!(matches!(err, Error::Load { kind: LoadErrorKind::MissingFile(_), .. }), "{err}");
    }

    #[test]
    fn nan_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(dir.path(), &[sample_recording()]).unwrap();
        let payload = dir.path().join("rec_000.f32");
        let mut bytes = fs::read(&payload).unwrap();
        bytes[40..44].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&payload, bytes).unwrap();
        let err = load_dataset::<f32>(&manifest).unwrap_err();
        assert!(matches!(err, Error::Load { kind: LoadErrorKind::NonFinite(10), .. }), "{err}");
    }

    #[test]
    fn short_recording_rejected_against_window() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(dir.path(), &[sample_recording()]).unwrap();
        let err = load_dataset_with_window::<f32>(&manifest, Some(1001)).unwrap_err();
        assert!(matches!(err, Error::Load { kind: LoadErrorKind::TooShort { .. }, .. }));
        assert!(load_dataset_with_window::<f32>(&manifest, Some(1000)).is_ok());
    }

    #[test]
    fn rewrite_reproduces_payload_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(dir.path(), &[sample_recording()]).unwrap();
        let original = fs::read(dir.path().join("rec_000.f32")).unwrap();
        let loaded: Vec<Recording<f64>> = load_dataset(&manifest).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_dataset(dir2.path(), &loaded).unwrap();
        assert_eq!(fs::read(dir2.path().join("rec_000.f32")).unwrap(), original);
        assert_eq!(
            fs::read(dir.path().join("manifest.json")).unwrap(),
            fs::read(dir2.path().join("manifest.json")).unwrap()
        );
    }

    #[test]
    fn unknown_manifest_field_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        fs::write(&path, r#"[{"subject_id":0,"sample_rate_hz":1,"channels":["a"],"samples":1,"data_file":"x","bogus":1}]"#)
            .unwrap();
        assert!(matches!(load_dataset::<f32>(&path), Err(Error::Load { kind: LoadErrorKind::Schema(_), .. })));
    }
}
