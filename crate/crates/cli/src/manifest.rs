//! Dataset directory layout.
//!
//! A dataset is a directory with one mesh + label file pair per scan and
//! a `manifest.json` naming them:
//!
//! ```json
//! {
//!   "scans": [
//!     {"name": "scan_0000", "mesh": "scan_0000.obj",
//!      "labels": "scan_0000.labels", "jaw": "maxillary", "seed": 0}
//!   ],
//!   "synth": { ... generator parameters, when generated ... }
//! }
//! ```
//!
//! Paths inside the manifest are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toothseg::fsio::atomic_write;
use toothseg::train::synth::SynthConfig;
use toothseg::{Jaw, LabelMap, TriMesh};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanEntry {
    pub name: String,
    pub mesh: String,
    pub labels: String,
    pub jaw: Jaw,
    /// Generator seed, when synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub scans: Vec<ScanEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

impl Manifest {
    pub fn path_in(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }

    pub fn load(dir: &Path) -> Result<Manifest, CliError> {
        let path = Self::path_in(dir);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::Msg(format!("cannot read {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Msg(format!("bad manifest {}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .expect("manifest serialization cannot fail");
        atomic_write(&Self::path_in(dir), text.as_bytes())
            .map_err(|e| CliError::Msg(format!("cannot write manifest: {e}")))?;
        Ok(())
    }
}

/// One scan pulled into memory with its labels length-checked.
pub struct LoadedScan {
    pub name: String,
    pub mesh: TriMesh,
    pub labels: LabelMap,
    pub jaw: Jaw,
}

/// Load every scan a manifest names.
pub fn load_dataset(dir: &Path) -> Result<Vec<LoadedScan>, CliError> {
    let manifest = Manifest::load(dir)?;
    if manifest.scans.is_empty() {
        return Err(CliError::Msg(format!(
            "dataset {} lists no scans",
            dir.display()
        )));
    }
    let mut scans = Vec::with_capacity(manifest.scans.len());
    for entry in &manifest.scans {
        let mesh = toothseg::mesh::load_mesh(&dir.join(&entry.mesh))?;
        let labels = LabelMap::load(&dir.join(&entry.labels))?;
        labels.expect_len(mesh.face_count())?;
        scans.push(LoadedScan {
            name: entry.name.clone(),
            mesh,
            labels,
            jaw: entry.jaw,
        });
    }
    Ok(scans)
}
