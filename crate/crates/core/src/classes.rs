//! Class-id and jaw conventions.
//!
//! Class 0 is the gingiva. Classes 1–16 are maxillary teeth in FDI order
//! 11–18, 21–28; classes 17–32 are mandibular teeth in FDI order 31–38,
//! 41–48. A single 33-way head covers both jaws; the network additionally
//! receives the jaw category as a 2-dim one-hot vector.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Number of segmentation classes: 32 permanent teeth plus the gingiva.
pub const NUM_CLASSES: usize = 33;

/// Class id of the gingiva (background).
pub const GINGIVA: u8 = 0;

/// Jaw category, encoded for the network as a 2-dim one-hot vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Jaw {
    Maxillary,
    Mandible,
}

impl Jaw {
    /// One-hot category vector fed to the network: maxillary = (1,0),
    /// mandible = (0,1).
    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Jaw::Maxillary => [1.0, 0.0],
            Jaw::Mandible => [0.0, 1.0],
        }
    }

    /// Tooth class ids belonging to this jaw (gingiva excluded).
    pub fn tooth_classes(self) -> std::ops::RangeInclusive<u8> {
        match self {
            Jaw::Maxillary => 1..=16,
            Jaw::Mandible => 17..=32,
        }
    }

    pub fn parse(s: &str) -> Option<Jaw> {
        match s.to_ascii_lowercase().as_str() {
            "maxillary" | "upper" => Some(Jaw::Maxillary),
            "mandible" | "mandibular" | "lower" => Some(Jaw::Mandible),
            _ => None,
        }
    }
}

impl fmt::Display for Jaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Jaw::Maxillary => write!(f, "maxillary"),
            Jaw::Mandible => write!(f, "mandible"),
        }
    }
}

/// FDI two-digit code for a tooth class id, or `None` for the gingiva.
///
/// Quadrants are laid out 11–18, 21–28 (maxillary) and 31–38, 41–48
/// (mandibular), each central-incisor-to-third-molar.
pub fn fdi_code(class: u8) -> Option<u8> {
    match class {
        0 => None,
        1..=8 => Some(10 + class),
        9..=16 => Some(20 + class - 8),
        17..=24 => Some(30 + class - 16),
        25..=32 => Some(40 + class - 24),
        _ => None,
    }
}

/// Human-readable name for a class id ("gingiva" or "FDI nn").
pub fn class_name(class: u8) -> String {
    match fdi_code(class) {
        None => "gingiva".to_string(),
        Some(code) => format!("FDI {code}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fdi_mapping_covers_all_quadrants() {
        assert_eq!(fdi_code(0), None);
        assert_eq!(fdi_code(1), Some(11));
        assert_eq!(fdi_code(8), Some(18));
        assert_eq!(fdi_code(9), Some(21));
        assert_eq!(fdi_code(16), Some(28));
        assert_eq!(fdi_code(17), Some(31));
        assert_eq!(fdi_code(24), Some(38));
        assert_eq!(fdi_code(25), Some(41));
        assert_eq!(fdi_code(32), Some(48));
        assert_eq!(fdi_code(33), None);
    }

    #[test]
    fn fdi_codes_are_distinct() {
        let codes: Vec<u8> = (1..=32).map(|c| fdi_code(c).unwrap()).collect();
        let mut dedup = codes.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), 32);
    }

    #[test]
    fn jaw_class_ranges_partition_teeth() {
        let maxi: Vec<u8> = Jaw::Maxillary.tooth_classes().collect();
        let mand: Vec<u8> = Jaw::Mandible.tooth_classes().collect();
        assert_eq!(maxi.len() + mand.len(), 32);
        assert!(maxi.iter().all(|c| !mand.contains(c)));
    }

    #[test]
    fn one_hot_is_one_hot() {
        assert_eq!(Jaw::Maxillary.one_hot(), [1.0, 0.0]);
        assert_eq!(Jaw::Mandible.one_hot(), [0.0, 1.0]);
    }
}
