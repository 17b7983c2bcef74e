//! Versioned binary weight files.
//!
//! Layout: the 8-byte magic, a little-endian `u32` version, a little-endian
//! `u32` header length, a JSON header describing the architecture and every
//! tensor, then the raw little-endian `f64` values in declaration order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InitScheme, ModelParameters};
use crate::datakit::ChannelStats;
use crate::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"SELFHAR\0";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    num_classes: usize,
    /// "har", "linear" or absent.
    classifier: Option<String>,
    /// "per_task", "shared" or absent.
    td_heads: Option<String>,
    tensors: Vec<TensorEntry>,
}

fn header_of(model: &ModelParameters) -> Header {
    Header {
        num_classes: model.num_classes(),
        classifier: model.classifier().map(|c| c.kind().to_string()),
        td_heads: model
            .td_heads()
            .map(|t| if t.shared.is_some() { "shared" } else { "per_task" }.to_string()),
        tensors: model
            .parameters()
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                frozen: p.frozen,
            })
            .collect(),
    }
}

/// Serializes a model to the weight-file byte layout.
pub fn weights_to_bytes(model: &ModelParameters) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&header_of(model))?;
    let mut out = Vec::with_capacity(16 + header.len() + model.parameter_count() * 8);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for p in model.parameters() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format("weight file truncated in preamble".into()))
}

/// Parses the weight-file byte layout.
pub fn weights_from_bytes(bytes: &[u8]) -> Result<ModelParameters> {
    if bytes.len() < 8 || &bytes[..8] != WEIGHTS_MAGIC {
        return Err(Error::Format("not a weight file (bad magic)".into()));
    }
    let version = read_u32(bytes, 8)?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Format(format!(
            "unsupported weight file version {version} (expected {WEIGHTS_VERSION})"
        )));
    }
    let header_len = read_u32(bytes, 12)? as usize;
    let body_start = 16 + header_len;
    let header_bytes = bytes
        .get(16..body_start)
        .ok_or_else(|| Error::Format("weight file truncated in header".into()))?;
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Format(format!("malformed weight file header: {e}")))?;

    let mut model = match (header.classifier.as_deref(), header.td_heads.as_deref()) {
        (_, None) => ModelParameters::har(header.num_classes, InitScheme::default(), 0)?,
        (_, Some(kind)) => ModelParameters::multitask(
            header.num_classes,
            InitScheme::default(),
            match kind {
                "shared" => true,
                "per_task" => false,
                other => return Err(Error::Format(format!("unknown head layout {other:?}"))),
            },
            0,
        )?,
    };
    match header.classifier.as_deref() {
        Some("har") => {}
        Some("linear") => model.attach_linear_head(0),
        None => {
            model.detach_classifier();
        }
        Some(other) => return Err(Error::Format(format!("unknown classifier {other:?}"))),
    }

    let expected = header_of(&model);
    let names_match = expected.tensors.len() == header.tensors.len()
        && expected
            .tensors
            .iter()
            .zip(&header.tensors)
            .all(|(a, b)| a.name == b.name && a.shape == b.shape);
    if !names_match {
        return Err(Error::Format("tensor table does not match the declared architecture".into()));
    }
    let body = &bytes[body_start..];
    let needed = model.parameter_count() * 8;
    if body.len() != needed {
        return Err(Error::Format(format!(
            "weight payload is {} bytes, architecture needs {needed}",
            body.len()
        )));
    }
    let mut chunks = body.chunks_exact(8);
    for (p, entry) in model.parameters_mut().into_iter().zip(&header.tensors) {
        for slot in p.value.data_mut() {
            let v = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(Error::Format(format!("non-finite value in tensor {}", p.name)));
            }
            *slot = v;
        }
        p.frozen = entry.frozen;
    }
    Ok(model)
}

pub fn save_weights(model: &ModelParameters, path: &Path) -> Result<()> {
    fs::write(path, weights_to_bytes(model)?)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<ModelParameters> {
    weights_from_bytes(&fs::read(path)?)
}

/// Everything needed to run a trained classifier on new recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceDescriptor {
    pub architecture: String,
    pub num_classes: usize,
    pub label_vocabulary: Vec<String>,
    pub channel_stats: ChannelStats,
    pub window_len: usize,
    pub sampling_rate_hz: f64,
}

impl InferenceDescriptor {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let d: Self = serde_json::from_slice(&fs::read(path)?)?;
        if d.label_vocabulary.len() != d.num_classes {
            return Err(Error::Format(format!(
                "descriptor lists {} labels for {} classes",
                d.label_vocabulary.len(),
                d.num_classes
            )));
        }
        Ok(d)
    }
}
