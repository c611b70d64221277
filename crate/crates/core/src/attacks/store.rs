//! On-disk adversary sets: `manifest.json` plus `tensors.bin`.
//!
//! `tensors.bin` layout (little-endian): magic `b"ADVT"`, `u32` version,
//! `u64` example count, `u32` rank, `u64` per dimension, then every
//! original image followed by every perturbed image, row-major `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{distortion, AdversarialExample, AdversarySet, AttackConfig, AttackKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"ADVT";
const VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSOR_FILE: &str = "tensors.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleRecord {
    pub true_label: usize,
    pub source_prediction: usize,
    pub success: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryManifest {
    pub format_version: u32,
    pub kind: AttackKind,
    pub config: AttackConfig,
    pub epsilon: Option<f64>,
    pub source_model_sha256: String,
    pub count: usize,
    pub fooling: usize,
    pub mean_distortion: f64,
    pub shape: Vec<usize>,
    pub tensor_file: String,
    pub examples: Vec<ExampleRecord>,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::AdversaryFormat(msg.into())
}

pub fn save_adversary_set(
    dir: &Path,
    set: &AdversarySet,
    config: &AttackConfig,
    source_model_sha256: &str,
) -> Result<AdversaryManifest> {
    fs::create_dir_all(dir)?;
    let shape = set
        .examples
        .first()
        .map(|e| e.original.shape().to_vec())
        .unwrap_or_default();
    let mut bin = Vec::new();
    bin.extend_from_slice(MAGIC);
    bin.extend_from_slice(&VERSION.to_le_bytes());
    bin.extend_from_slice(&(set.len() as u64).to_le_bytes());
    bin.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in &shape {
        bin.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for e in &set.examples {
        e.original.check_shape(&shape)?;
        bin.extend(e.original.data().iter().flat_map(|v| v.to_le_bytes()));
    }
    for e in &set.examples {
        e.perturbed.check_shape(&shape)?;
        bin.extend(e.perturbed.data().iter().flat_map(|v| v.to_le_bytes()));
    }
    fs::write(dir.join(TENSOR_FILE), bin)?;

    let manifest = AdversaryManifest {
        format_version: VERSION,
        kind: set.kind,
        config: config.clone(),
        epsilon: set.epsilon,
        source_model_sha256: source_model_sha256.to_string(),
        count: set.len(),
        fooling: set.fooling().count(),
        mean_distortion: set.mean_distortion(),
        shape,
        tensor_file: TENSOR_FILE.to_string(),
        examples: set
            .examples
            .iter()
            .map(|e| ExampleRecord {
                true_label: e.true_label,
                source_prediction: e.source_prediction,
                success: e.success,
                iterations: e.iterations,
            })
            .collect(),
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let out = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| fmt_err("tensor file truncated"))?;
        self.pos += n;
        Ok(out)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_adversary_set(dir: &Path) -> Result<(AdversarySet, AdversaryManifest)> {
    let manifest: AdversaryManifest =
        serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != VERSION {
        return Err(fmt_err(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    let bytes = fs::read(dir.join(&manifest.tensor_file))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(4)? != MAGIC {
        return Err(fmt_err("bad tensor file magic"));
    }
    if cur.u32()? != VERSION {
        return Err(fmt_err("unsupported tensor file version"));
    }
    let count = cur.u64()? as usize;
    let rank = cur.u32()? as usize;
    let shape = (0..rank)
        .map(|_| cur.u64().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if count != manifest.count || count != manifest.examples.len() || shape != manifest.shape {
        return Err(fmt_err("tensor file header disagrees with manifest"));
    }
    let dim: usize = shape.iter().product();
    let originals = cur.f64s(count * dim)?;
    let perturbed = cur.f64s(count * dim)?;
    if cur.pos != bytes.len() {
        return Err(fmt_err("trailing bytes in tensor file"));
    }
    let examples = manifest
        .examples
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let original = Tensor::new(shape.clone(), originals[i * dim..(i + 1) * dim].to_vec())?;
            let pert = Tensor::new(shape.clone(), perturbed[i * dim..(i + 1) * dim].to_vec())?;
            Ok(AdversarialExample {
                distortion: distortion(&original, &pert)?,
                original,
                perturbed: pert,
                true_label: rec.true_label,
                source_prediction: rec.source_prediction,
                kind: manifest.kind,
                success: rec.success,
                iterations: rec.iterations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let set = AdversarySet {
        kind: manifest.kind,
        epsilon: manifest.epsilon,
        examples,
    };
    Ok((set, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(v: f64, label: usize) -> AdversarialExample {
        let original = Tensor::new(vec![1, 2, 2], vec![v, 0.5, 0.25, 1.0]).unwrap();
        let perturbed = Tensor::new(vec![1, 2, 2], vec![v + 0.1, 0.4, 0.3, 0.9]).unwrap();
        AdversarialExample {
            distortion: distortion(&original, &perturbed).unwrap(),
            original,
            perturbed,
            true_label: label,
            source_prediction: label + 1,
            kind: AttackKind::DeepFool,
            success: label == 0,
            iterations: 2 + label,
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let set = AdversarySet {
            kind: AttackKind::DeepFool,
            epsilon: None,
            examples: vec![example(0.1, 0), example(0.3, 2)],
        };
        let written =
            save_adversary_set(dir.path(), &set, &AttackConfig::default(), "abc").unwrap();
        let (back, manifest) = load_adversary_set(dir.path()).unwrap();
        assert_eq!(back, set);
        assert_eq!(manifest, written);
        assert_eq!(manifest.count, 2);
        assert_eq!(manifest.fooling, 2);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let set = AdversarySet {
            kind: AttackKind::Fgs,
            epsilon: Some(0.1),
            examples: vec![example(0.1, 0)],
        };
        save_adversary_set(dir.path(), &set, &AttackConfig::default(), "abc").unwrap();
        let path = dir.path().join(TENSOR_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(load_adversary_set(dir.path()).is_err());
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(load_adversary_set(dir.path()).is_err());
    }
}
