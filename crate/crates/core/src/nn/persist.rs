//! Versioned JSON model documents.
//!
//! ```json
//! {"format_version":1,
//!  "config":{...},
//!  "layers":[{"kind":"dense","shape":[4,16],"weights":[...],"bias":[...]}, ...]}
//! ```
//!
//! Parameter-free layers carry an empty shape and weight list.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::network::Network;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub kind: String,
    pub shape: Vec<usize>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: u32,
    pub config: NetworkConfig,
    pub layers: Vec<LayerRecord>,
}

impl Network {
    pub fn to_document(&self) -> ModelDocument {
        let layers = self
            .config()
            .layers
            .iter()
            .zip(self.params())
            .map(|(spec, params)| match params.as_slice() {
                [w, b] => LayerRecord {
                    kind: spec.name().to_string(),
                    shape: w.shape().to_vec(),
                    weights: w.data().to_vec(),
                    bias: b.data().to_vec(),
                },
                _ => LayerRecord {
                    kind: spec.name().to_string(),
                    shape: vec![],
                    weights: vec![],
                    bias: vec![],
                },
            })
            .collect();
        ModelDocument {
            format_version: FORMAT_VERSION,
            config: self.config().clone(),
            layers,
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.layers.len() != doc.config.layers.len() {
            return Err(Error::ModelFormat(format!(
                "config lists {} layers, document {}",
                doc.config.layers.len(),
                doc.layers.len()
            )));
        }
        let mut params = Vec::with_capacity(doc.layers.len());
        for (spec, rec) in doc.config.layers.iter().zip(doc.layers) {
            if rec.kind != spec.name() {
                return Err(Error::ModelFormat(format!(
                    "layer kind `{}` does not match config `{}`",
                    rec.kind,
                    spec.name()
                )));
            }
            if rec.weights.is_empty() {
                params.push(vec![]);
                continue;
            }
            let rows = rec.shape.first().copied().unwrap_or(0);
            let w = Tensor::new(rec.shape, rec.weights)
                .map_err(|e| Error::ModelFormat(e.to_string()))?;
            if rec.bias.len() != rows {
                return Err(Error::ModelFormat(format!(
                    "bias length {} does not match {rows} rows",
                    rec.bias.len()
                )));
            }
            params.push(vec![w, Tensor::vector(rec.bias)]);
        }
        Network::from_params(doc.config, params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
