//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "TOOTHSEG"
//! version  u32      currently 1
//! hdr_len  u64      length of the JSON header
//! header   bytes    {"config", "rng_seed", "epoch", "step", "meta"}
//! count    u32      number of tensors
//! tensor*  u32 name_len, name bytes, u64 rows, u64 cols,
//!          rows*cols f32 values, row-major
//! ```
//!
//! Tensor payloads are float32; save/load round-trips f32 parameters
//! bit-exactly. Optimizer state rides along as tensors under an "opt."
//! name prefix so training can resume exactly.

use std::io::{self, Read};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{Network, NetworkConfig, ParamSet};
use crate::fsio::atomic_write;

const MAGIC: &[u8; 8] = b"TOOTHSEG";

/// On-disk format revision written into and required from every file.
pub const FORMAT_VERSION: u32 = 1;
const VERSION: u32 = FORMAT_VERSION;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path} is not a checkpoint (bad magic)")]
    BadMagic { path: String },
    #[error("{path}: unsupported checkpoint version {found} (newest known: {VERSION})")]
    BadVersion { path: String, found: u32 },
    #[error("{path}: malformed checkpoint: {msg}")]
    Malformed { path: String, msg: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    rng_seed: u64,
    epoch: u64,
    step: u64,
    #[serde(default)]
    meta: serde_json::Value,
}

/// In-memory checkpoint contents.
#[derive(Debug)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub rng_seed: u64,
    pub epoch: u64,
    pub step: u64,
    /// Free-form training metadata (sample counts, loss weights, ...).
    pub meta: serde_json::Value,
    /// All tensors in file order: parameters first, then optimizer state
    /// under "opt." prefixes.
    pub tensors: Vec<(String, Array2<f32>)>,
}

impl Checkpoint {
    /// Split tensors into network parameters and optimizer state, then
    /// shape-audit the parameters against the stored config.
    pub fn into_network(self) -> Result<(Network<f32>, ParamSet<f32>, Header2), CheckpointError> {
        let mut params = ParamSet::new();
        let mut opt = ParamSet::new();
        for (name, tensor) in self.tensors {
            if let Some(rest) = name.strip_prefix("opt.") {
                opt.insert(rest, tensor);
            } else {
                params.insert(name, tensor);
            }
        }
        let network = Network::from_params(self.config, params).map_err(|e| {
            CheckpointError::Malformed {
                path: String::new(),
                msg: e.to_string(),
            }
        })?;
        Ok((
            network,
            opt,
            Header2 {
                rng_seed: self.rng_seed,
                epoch: self.epoch,
                step: self.step,
                meta: self.meta,
            },
        ))
    }
}

/// The non-tensor fields of a checkpoint, after `into_network` consumed it.
#[derive(Debug)]
pub struct Header2 {
    pub rng_seed: u64,
    pub epoch: u64,
    pub step: u64,
    pub meta: serde_json::Value,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let header = Header {
        config: ckpt.config.clone(),
        rng_seed: ckpt.rng_seed,
        epoch: ckpt.epoch,
        step: ckpt.step,
        meta: ckpt.meta.clone(),
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");

    let payload: usize = ckpt
        .tensors
        .iter()
        .map(|(n, t)| 4 + n.len() + 16 + t.len() * 4)
        .sum();
    let mut out = Vec::with_capacity(8 + 4 + 8 + header_bytes.len() + 4 + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&(ckpt.tensors.len() as u32).to_le_bytes());
    for (name, tensor) in &ckpt.tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(tensor.ncols() as u64).to_le_bytes());
        for &v in tensor.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    atomic_write(path, &out).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let p = || path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: p(),
        source,
    })?;
    let mut cur = io::Cursor::new(bytes.as_slice());

    let mut magic = [0u8; 8];
    read(&mut cur, &mut magic, path)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic { path: p() });
    }
    let version = read_u32(&mut cur, path)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion {
            path: p(),
            found: version,
        });
    }

    let header_len = read_u64(&mut cur, path)? as usize;
    let mut header_bytes = vec![0u8; header_len];
    read(&mut cur, &mut header_bytes, path)?;
    let header: Header =
        serde_json::from_slice(&header_bytes).map_err(|e| CheckpointError::Malformed {
            path: p(),
            msg: format!("header: {e}"),
        })?;

    let count = read_u32(&mut cur, path)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut cur, path)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read(&mut cur, &mut name_bytes, path)?;
        let name = String::from_utf8(name_bytes).map_err(|_| CheckpointError::Malformed {
            path: p(),
            msg: "tensor name is not UTF-8".into(),
        })?;
        let rows = read_u64(&mut cur, path)? as usize;
        let cols = read_u64(&mut cur, path)? as usize;
        let mut data = vec![0f32; rows * cols];
        for v in &mut data {
            let mut b = [0u8; 4];
            read(&mut cur, &mut b, path)?;
            *v = f32::from_le_bytes(b);
        }
        let tensor =
            Array2::from_shape_vec((rows, cols), data).map_err(|_| CheckpointError::Malformed {
                path: p(),
                msg: format!("tensor {name}: shape/payload mismatch"),
            })?;
        tensors.push((name, tensor));
    }

    Ok(Checkpoint {
        config: header.config,
        rng_seed: header.rng_seed,
        epoch: header.epoch,
        step: header.step,
        meta: header.meta,
        tensors,
    })
}

fn read(cur: &mut io::Cursor<&[u8]>, buf: &mut [u8], path: &Path) -> Result<(), CheckpointError> {
    cur.read_exact(buf).map_err(|_| CheckpointError::Malformed {
        path: path.display().to_string(),
        msg: "unexpected end of file".into(),
    })
}

fn read_u32(cur: &mut io::Cursor<&[u8]>, path: &Path) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    read(cur, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(cur: &mut io::Cursor<&[u8]>, path: &Path) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    read(cur, &mut b, path)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::NetworkConfig;

    fn tiny() -> NetworkConfig {
        NetworkConfig {
            d_e: 8,
            d_p: 12,
            d_v: 4,
            k_nn: 3,
            n_heads: 2,
            n_layers: 2,
            dropout: 0.0,
            head_hidden: (12, 8),
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net: Network<f32> = Network::init(tiny(), 5).unwrap();

        let ckpt = Checkpoint {
            config: net.config().clone(),
            rng_seed: 5,
            epoch: 3,
            step: 170,
            meta: serde_json::json!({"n_points": 256}),
            tensors: net
                .params()
                .iter()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
        };
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.epoch, 3);
        assert_eq!(loaded.step, 170);
        assert_eq!(loaded.rng_seed, 5);
        assert_eq!(loaded.meta["n_points"], 256);
        assert_eq!(loaded.tensors.len(), net.params().len());
        for ((an, at), (bn, bt)) in ckpt.tensors.iter().zip(&loaded.tensors) {
            assert_eq!(an, bn);
            assert_eq!(at, bt, "payload must round-trip bit-exactly");
        }

        // Saving the reload reproduces identical bytes.
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn into_network_shape_audits() {
        let net: Network<f32> = Network::init(tiny(), 6).unwrap();
        let mut tensors: Vec<(String, Array2<f32>)> = net
            .params()
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        tensors.push(("opt.m.fuse.w".into(), Array2::zeros((2, 2))));

        let ckpt = Checkpoint {
            config: tiny(),
            rng_seed: 6,
            epoch: 0,
            step: 0,
            meta: serde_json::Value::Null,
            tensors,
        };
        let (net2, opt, extra) = ckpt.into_network().unwrap();
        assert_eq!(net2.config(), net.config());
        assert!(opt.get("m.fuse.w").is_some());
        assert_eq!(extra.step, 0);

        // Corrupt a shape: the audit must reject it.
        let mut tensors: Vec<(String, Array2<f32>)> = net
            .params()
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        tensors[0].1 = Array2::zeros((1, 1));
        let bad = Checkpoint {
            config: tiny(),
            rng_seed: 0,
            epoch: 0,
            step: 0,
            meta: serde_json::Value::Null,
            tensors,
        };
        assert!(bad.into_network().is_err());
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOTACKPTxxxx").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::BadMagic { .. })
        ));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::BadVersion { found: 99, .. })
        ));
    }
}
