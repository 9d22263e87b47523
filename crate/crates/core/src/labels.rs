//! Per-face class assignments and the `.labels` sidecar format.

use crate::classes::{GINGIVA, NUM_CLASSES};
use crate::fsio::atomic_write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: invalid label {value:?} (expected integer in [0, {max}))", max = NUM_CLASSES)]
    Parse {
        path: String,
        line: usize,
        value: String,
    },
    #[error("label id {value} out of range [0, {max}) at position {index}", max = NUM_CLASSES)]
    OutOfRange { index: usize, value: u32 },
    #[error("label count {got} does not match face count {expected}")]
    CountMismatch { got: usize, expected: usize },
}

/// One class id per face (or per point), ids in `[0, 33)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    ids: Vec<u8>,
}

impl LabelMap {
    pub fn from_ids(ids: Vec<u8>) -> Result<Self, LabelError> {
        for (index, &id) in ids.iter().enumerate() {
            if id as usize >= NUM_CLASSES {
                return Err(LabelError::OutOfRange {
                    index,
                    value: id as u32,
                });
            }
        }
        Ok(LabelMap { ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u8] {
        &self.ids
    }

    pub fn get(&self, i: usize) -> u8 {
        self.ids[i]
    }

    /// Binary tooth/gingiva labels: 1 where the class is a tooth, 0 gingiva.
    pub fn aux_ids(&self) -> Vec<u8> {
        self.ids.iter().map(|&c| (c != GINGIVA) as u8).collect()
    }

    /// Sorted list of distinct class ids present.
    pub fn distinct(&self) -> Vec<u8> {
        let mut seen = [false; NUM_CLASSES];
        for &c in &self.ids {
            seen[c as usize] = true;
        }
        (0..NUM_CLASSES as u8).filter(|&c| seen[c as usize]).collect()
    }

    /// Per-class face counts.
    pub fn histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0usize; NUM_CLASSES];
        for &c in &self.ids {
            h[c as usize] += 1;
        }
        h
    }

    /// Load a `.labels` sidecar: one integer per line, line k labels face k.
    pub fn load(path: &Path) -> Result<Self, LabelError> {
        let text = std::fs::read_to_string(path).map_err(|source| LabelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut ids = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let value: usize = trimmed.parse().map_err(|_| LabelError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                value: trimmed.to_string(),
            })?;
            if value >= NUM_CLASSES {
                return Err(LabelError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    value: trimmed.to_string(),
                });
            }
            ids.push(value as u8);
        }
        Ok(LabelMap { ids })
    }

    /// Write the `.labels` sidecar (one integer per line).
    pub fn save(&self, path: &Path) -> Result<(), LabelError> {
        let mut out = String::with_capacity(self.ids.len() * 3);
        for &c in &self.ids {
            out.push_str(&c.to_string());
            out.push('\n');
        }
        atomic_write(path, out.as_bytes()).map_err(|source| LabelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn expect_len(&self, expected: usize) -> Result<(), LabelError> {
        if self.ids.len() != expected {
            return Err(LabelError::CountMismatch {
                got: self.ids.len(),
                expected,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("jaw.labels");
        let map = LabelMap::from_ids(vec![0, 1, 17, 32, 0]).unwrap();
        map.save(&path).unwrap();
        let reloaded = LabelMap::load(&path).unwrap();
        assert_eq!(map, reloaded);
    }

    #[test]
    fn rejects_out_of_range_ids() {
        assert!(LabelMap::from_ids(vec![0, 33]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.labels");
        std::fs::write(&path, "0\n40\n").unwrap();
        let err = LabelMap::load(&path).unwrap_err();
        assert!(matches!(err, LabelError::Parse { line: 2, .. }));
    }

    #[test]
    fn aux_ids_follow_gingiva_rule() {
        let map = LabelMap::from_ids(vec![0, 5, 0, 20]).unwrap();
        assert_eq!(map.aux_ids(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn distinct_and_histogram() {
        let map = LabelMap::from_ids(vec![3, 0, 3, 7]).unwrap();
        assert_eq!(map.distinct(), vec![0, 3, 7]);
        let h = map.histogram();
        assert_eq!(h[3], 2);
        assert_eq!(h[0], 1);
        assert_eq!(h[7], 1);
    }
}
