//! `model.json` + `weights.f64` checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelSpec, ModelState};
use crate::dataset::PayloadFile;
use crate::payload::{ensure_dir, read_f64, read_json, write_f64, write_json};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "optics-tcn/checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

const MODEL_FILE: &str = "model.json";
const WEIGHTS_FILE: &str = "weights.f64";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    byte_offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointDocument {
    format: String,
    format_version: u32,
    spec: ModelSpec,
    init_seed: u64,
    parameter_count: usize,
    parameters: Vec<ManifestEntry>,
    weights: PayloadFile,
}

pub fn save_checkpoint(model: &ModelState, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let crc32 = write_f64(&dir.join(WEIGHTS_FILE), model.params())?;
    let doc = CheckpointDocument {
        format: CHECKPOINT_FORMAT.into(),
        format_version: CHECKPOINT_VERSION,
        spec: model.spec().clone(),
        init_seed: model.init_seed(),
        parameter_count: model.parameter_count(),
        parameters: model
            .entries()
            .iter()
            .map(|e| ManifestEntry {
                name: e.name.clone(),
                shape: e.shape.clone(),
                byte_offset: 8 * e.offset,
            })
            .collect(),
        weights: PayloadFile {
            file: WEIGHTS_FILE.into(),
            shape: vec![model.parameter_count()],
            crc32,
        },
    };
    write_json(&dir.join(MODEL_FILE), &doc)
}

pub fn load_checkpoint(dir: &Path) -> Result<ModelState> {
    let path = dir.join(MODEL_FILE);
    let doc: CheckpointDocument = read_json(&path)?;
    if doc.format != CHECKPOINT_FORMAT {
        return Err(Error::format(&path, format!("unexpected format tag {:?}", doc.format)));
    }
    if doc.format_version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            path,
            found: doc.format_version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let params = read_f64(&dir.join(&doc.weights.file), doc.parameter_count, doc.weights.crc32)?;
    let model = ModelState::from_parts(&doc.spec, doc.init_seed, params)?;
    let consistent = model.entries().len() == doc.parameters.len()
        && model
            .entries()
            .iter()
            .zip(&doc.parameters)
            .all(|(e, m)| e.name == m.name && e.shape == m.shape && 8 * e.offset == m.byte_offset);
    if !consistent {
        return Err(Error::format(
            &path,
            "parameter manifest does not match the layout implied by the spec",
        ));
    }
    Ok(model)
}
