//! JSON checkpoint: configuration, normalizer, free-form metadata and every
//! tensor with its name, shape and row-major values. Floats are written in
//! shortest round-trip form, so a save/load cycle is bit exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CerberusConfig, CerberusParams, MODEL_VERSION};
use crate::error::{Error, Result};
use crate::featurize::Normalizer;
use crate::neural::Parameters;

const FORMAT: &str = "cerberus-checkpoint";

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: String,
    config: CerberusConfig,
    normalizer: Normalizer,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    tensors: Vec<TensorRecord>,
}

/// Parameters plus string metadata (split settings, training echo, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: CerberusParams,
    pub metadata: BTreeMap<String, String>,
}

pub fn checkpoint_to_string(params: &CerberusParams, metadata: &BTreeMap<String, String>) -> Result<String> {
    params.validate()?;
    let doc = Document {
        format: FORMAT.into(),
        version: params.version.clone(),
        config: params.config.clone(),
        normalizer: params.normalizer,
        metadata: metadata.clone(),
        tensors: params
            .names()
            .into_iter()
            .zip(params.tensors())
            .map(|(name, t)| TensorRecord {
                name,
                rows: t.rows,
                cols: t.cols,
                data: t.data.clone(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Checkpoint(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Parses and validates a checkpoint. Every tensor must be present exactly
/// once with the shape the stored configuration implies.
pub fn checkpoint_from_str(text: &str) -> Result<Checkpoint> {
    let doc: Document =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
    if doc.format != FORMAT {
        return Err(Error::Checkpoint(format!("unknown format tag {:?}", doc.format)));
    }
    if doc.version != MODEL_VERSION {
        return Err(Error::Checkpoint(format!(
            "model version {:?}, expected {MODEL_VERSION:?}",
            doc.version
        )));
    }
    let mut params = CerberusParams::zeros(doc.config, doc.normalizer)
        .map_err(|e| Error::Checkpoint(format!("invalid configuration: {e}")))?;
    let names = params.names();
    if doc.tensors.len() != names.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            names.len(),
            doc.tensors.len()
        )));
    }
    for ((name, slot), rec) in names.iter().zip(params.tensors_mut()).zip(doc.tensors) {
        if &rec.name != name {
            return Err(Error::Checkpoint(format!("expected tensor {name}, found {}", rec.name)));
        }
        if (rec.rows, rec.cols) != slot.shape() || rec.data.len() != rec.rows * rec.cols {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: expected shape {}x{}, found {}x{} with {} values",
                slot.rows,
                slot.cols,
                rec.rows,
                rec.cols,
                rec.data.len()
            )));
        }
        slot.data = rec.data;
    }
    params
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid parameters: {e}")))?;
    Ok(Checkpoint {
        params,
        metadata: doc.metadata,
    })
}

pub fn save_checkpoint(path: &Path, params: &CerberusParams, metadata: &BTreeMap<String, String>) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(params, metadata)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_str(&std::fs::read_to_string(path)?)
}
