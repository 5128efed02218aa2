//! Checkpoint serialization and run manifests.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decoders::ScoreKind;
use crate::encoder::{AblationSwitches, EncoderParams};
use crate::error::{Error, Result};
use crate::tkg::Tkg;

/// Hex digest over the three vocabularies, binding a checkpoint to the
/// dataset it was trained on.
pub fn vocab_hash(tkg: &Tkg) -> String {
    let mut hasher = Sha256::new();
    for vocab in [&tkg.entities, &tkg.relations, &tkg.timestamps] {
        hasher.update((vocab.len() as u64).to_le_bytes());
        for label in vocab.labels() {
            hasher.update(label.as_bytes());
            hasher.update([0]);
        }
    }
    hex(&hasher.finalize())
}

/// Hex digest of a file's bytes, for manifests.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Trained encoder parameters plus everything needed to score with them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub score_kind: ScoreKind,
    pub ablation: AblationSwitches,
    pub vocab_hash: String,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Loads a checkpoint, refusing one whose vocabulary hash does not
    /// match the dataset it is being applied to.
    pub fn load(path: &Path, expected_vocab_hash: &str) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&json)?;
        if ckpt.vocab_hash != expected_vocab_hash {
            return Err(Error::VocabHashMismatch {
                found: ckpt.vocab_hash,
                expected: expected_vocab_hash.to_string(),
            });
        }
        Ok(ckpt)
    }
}

/// Record of one CLI run: inputs, configuration and timing, written next
/// to the outputs so results stay reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub rng_seed: u64,
    /// Input path -> content hash.
    pub input_hashes: std::collections::BTreeMap<String, String>,
    pub version: String,
    pub threads: usize,
    pub elapsed_seconds: f64,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }
}
