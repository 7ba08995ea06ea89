//! On-disk corpora: `manifest.json` plus one PGM per image and mask.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use segbias_core::corpus::{Corpus, Sample};
use segbias_core::GroupId;

use crate::error::{Error, InModule, Result};
use crate::pnm;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    width: usize,
    height: usize,
    clean_group: GroupId,
    samples: Vec<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    id: String,
    group: GroupId,
    image: String,
    mask_obs: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    mask_clean: Option<String>,
    corrupted: bool,
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if ok {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "sample id `{id}` cannot be used as a file name (allowed: ASCII letters, digits, - _ .)"
        )))
    }
}

/// Writes every sample's files under `dir` and returns the manifest path.
pub fn write_manifest(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (width, height) = corpus.samples()[0].image().dims();
    let mut samples = Vec::with_capacity(corpus.len());
    for s in corpus.samples() {
        check_id(s.id())?;
        let entry = Entry {
            id: s.id().into(),
            group: s.group(),
            image: format!("images/{}.pgm", s.id()),
            mask_obs: format!("masks/{}.pgm", s.id()),
            mask_clean: s.mask_clean().map(|_| format!("clean/{}.pgm", s.id())),
            corrupted: s.corrupted(),
        };
        pnm::write_gray(dir.join(&entry.image), s.image())?;
        pnm::write_mask(dir.join(&entry.mask_obs), s.mask_obs())?;
        if let (Some(path), Some(mask)) = (&entry.mask_clean, s.mask_clean()) {
            pnm::write_mask(dir.join(path), mask)?;
        }
        samples.push(serde_json::to_value(&entry).expect("plain struct"));
    }
    let manifest = Manifest {
        width,
        height,
        clean_group: corpus.clean_group(),
        samples,
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Inverse of [`write_manifest`].
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(path, None, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let expected = (manifest.width, manifest.height);
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for (i, raw) in manifest.samples.into_iter().enumerate() {
        let label = raw
            .get("id")
            .and_then(|v| v.as_str())
            .map(String::from)
            .unwrap_or_else(|| format!("#{i}"));
        let entry: Entry =
            serde_json::from_value(raw).map_err(|e| Error::parse(path, Some(&label), e.to_string()))?;
        let image = pnm::read_gray(base.join(&entry.image))?;
        let mask_obs = pnm::read_mask(base.join(&entry.mask_obs))?;
        let mask_clean = entry
            .mask_clean
            .as_ref()
            .map(|p| pnm::read_mask(base.join(p)))
            .transpose()?;
        for dims in [Some(image.dims()), Some(mask_obs.dims()), mask_clean.as_ref().map(|m| m.dims())]
            .into_iter()
            .flatten()
        {
            if dims != expected {
                return Err(segbias_core::Error::DimensionMismatch {
                    id: entry.id,
                    expected,
                    found: dims,
                })
                .in_module("synth_corpus");
            }
        }
        samples.push(
            Sample::new(entry.id, entry.group, image, mask_obs, mask_clean, entry.corrupted)
                .in_module("synth_corpus")?,
        );
    }
    Corpus::new(samples, manifest.clean_group).in_module("synth_corpus")
}

/// Pretty JSON with a trailing newline.
pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, None, e.to_string()))
}
