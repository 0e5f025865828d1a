//! Content-keyed artifact cache and report writing.
//!
//! Intermediate results live under `<out>/cache/<stage>-<key>.bin`, where the
//! key is a SHA-256 over the canonical JSON of the config keys the stage
//! depends on. Changing anything else (ε list, reference grid) reuses them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thincyl::cell::CellField;
use thincyl::interp::Grid2;
use thincyl::model::{config_to_json, ModelConfig};
use thincyl::{Error, Result};

/// Bumped whenever an artifact layout changes.
const FORMAT: u32 = 1;

/// Cell-stage artifact: correctors on the limit grid.
#[derive(Serialize, Deserialize)]
pub struct CellArtifact {
    pub u1: CellField,
    pub w1: Grid2,
    pub u2: Option<CellField>,
}

fn digest(v: &Value) -> String {
    // serde_json maps are key-sorted, so this text is canonical
    let text = serde_json::to_string(v).expect("config is serializable");
    hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
}

/// Key of the limit stage: problem data, β and the limit grid.
pub fn limit_key(cfg: &ModelConfig) -> String {
    let c = config_to_json(cfg);
    digest(&json!({
        "format": FORMAT,
        "stage": "limit",
        "length": c["length"],
        "horizon": c["horizon"],
        "delta1": c["delta1"],
        "cross_section": c["cross_section"],
        "velocity": c["velocity"],
        "interaction": c["interaction"],
        "boundary": c["boundary"],
        "beta": c["beta"],
        "s_max": c["s_max"],
        "nx": cfg.grid.nx,
        "nt": cfg.grid.nt,
        "nxi": cfg.grid.nxi,
    }))
}

/// Key of the cell stage; `full` artifacts also carry u₂.
pub fn cell_key(cfg: &ModelConfig, full: bool) -> String {
    digest(&json!({
        "format": FORMAT,
        "stage": "cell",
        "limit": limit_key(cfg),
        "full": full,
    }))
}

pub fn cache_path(out: &Path, stage: &str, key: &str) -> PathBuf {
    out.join("cache").join(format!("{stage}-{key}.bin"))
}

/// Write through a temporary file so readers never see a partial artifact.
pub fn store<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let bytes = bincode::serialize(value).map_err(|e| Error::Numeric(format!("encoding artifact: {e}")))?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `Ok(None)` when the artifact does not exist.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    bincode::deserialize(&bytes)
        .map(Some)
        .map_err(|e| Error::Dependency(format!("unreadable artifact `{}`: {e}", path.display())))
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Numeric(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}
