use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnyModel, ArchConfig};
use crate::concepts::schema_hash;
use crate::{Error, Result};

const FORMAT: &str = "vdx-checkpoint";
const VERSION: u32 = 1;

/// A trained head plus the schema it was trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub schema_sha256: String,
    pub arch_config: ArchConfig,
    pub model: AnyModel,
}

impl Checkpoint {
    pub fn new(model: AnyModel, arch_config: ArchConfig) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            schema_sha256: schema_hash().into(),
            arch_config,
            model,
        }
    }
}

impl AnyModel {
    /// Structural check of every tensor shape.
    pub fn validate(&self) -> Result<()> {
        match self {
            AnyModel::Cbm(m) => m.validate(),
            AnyModel::Cem(m) => m.validate(),
            AnyModel::Baseline(m) => m.validate(),
            AnyModel::Ideal(m) => m.validate(),
        }
    }
}

pub fn write_checkpoint<W: Write>(writer: W, checkpoint: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(writer);
    serde_json::to_writer(&mut w, checkpoint)?;
    w.flush()?;
    Ok(())
}

/// Rejects foreign files, other versions, other schemas and malformed
/// models.
pub fn read_checkpoint<R: Read>(reader: R) -> Result<Checkpoint> {
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(reader))?;
    let format = value.get("format").and_then(|v| v.as_str());
    if format != Some(FORMAT) {
        return Err(Error::Validation(format!(
            "not a checkpoint (format = {format:?})"
        )));
    }
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(u64::from(VERSION)) {
        return Err(Error::Validation(format!(
            "unsupported checkpoint version {version:?}"
        )));
    }
    let found = value
        .get("schema_sha256")
        .and_then(|v| v.as_str())
        .unwrap_or_default();
    if found != schema_hash() {
        return Err(Error::SchemaMismatch {
            expected: schema_hash().into(),
            found: found.into(),
        });
    }
    let checkpoint: Checkpoint = serde_json::from_value(value)?;
    checkpoint.model.validate()?;
    Ok(checkpoint)
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    write_checkpoint(File::create(path)?, checkpoint)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(File::open(path)?)
}
