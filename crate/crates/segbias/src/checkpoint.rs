//! Model checkpoints: a JSON header and a flat little-endian f64 blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use segbias_core::learner::LearnerModel;
use segbias_core::GroupId;

use crate::error::{Error, InModule, Result};
use crate::manifest::{read_json, write_json};

const FORMAT: &str = "segbias-model-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub hidden_dim: usize,
    pub patch_radius: usize,
    pub groups: Vec<GroupId>,
    pub n_params: usize,
    /// Blob file name, relative to the header.
    pub params: String,
    /// Group whose modulation is used for every input at inference, if any.
    pub inference_group: Option<GroupId>,
}

/// A model plus the inference rule it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: LearnerModel,
    pub inference_group: Option<GroupId>,
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`; returns the header path.
pub fn save(dir: impl AsRef<Path>, stem: &str, ck: &Checkpoint) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let blob_name = format!("{stem}.bin");
    let header = CheckpointHeader {
        format: FORMAT.into(),
        hidden_dim: ck.model.hidden_dim(),
        patch_radius: ck.model.patch_radius(),
        groups: ck.model.groups().to_vec(),
        n_params: ck.model.params().len(),
        params: blob_name.clone(),
        inference_group: ck.inference_group,
    };
    let blob: Vec<u8> = ck.model.params().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blob_path = dir.join(blob_name);
    fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))?;
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &header)?;
    Ok(path)
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let header: CheckpointHeader = read_json(path)?;
    if header.format != FORMAT {
        return Err(Error::parse(path, None, format!("unknown checkpoint format `{}`", header.format)));
    }
    let blob_path = path.parent().unwrap_or(Path::new(".")).join(&header.params);
    let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    if bytes.len() != 8 * header.n_params {
        return Err(Error::parse(
            &blob_path,
            None,
            format!("expected {} bytes, found {}", 8 * header.n_params, bytes.len()),
        ));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let model = LearnerModel::from_params(header.hidden_dim, header.patch_radius, &header.groups, params)
        .in_module("learner")?;
    if let Some(g) = header.inference_group {
        model.group_index(g).in_module("learner")?;
    }
    Ok(Checkpoint {
        model,
        inference_group: header.inference_group,
    })
}
