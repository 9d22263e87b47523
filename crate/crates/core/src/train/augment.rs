//! Random rigid-ish perturbations of a feature cloud.
//!
//! Applied after normalization, so the translation and jitter magnitudes
//! are in normalized units. Positions and normals transform together
//! under the rotation; the two curvature columns are rotation-invariant
//! scalars and are left untouched.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Rotation about the occlusal (z) axis, uniform in +-degrees.
    pub max_rotation_deg: f64,
    /// Per-axis translation, uniform in +-units.
    pub max_translation: f64,
    /// Gaussian position jitter, standard deviation per coordinate.
    pub jitter_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            max_rotation_deg: 30.0,
            max_translation: 0.05,
            jitter_sigma: 0.005,
        }
    }
}

/// Perturb an N x 8 feature matrix in place: columns 0..3 are positions,
/// 3..6 normals, 6..8 curvatures. Draw order is fixed (angle, then the
/// three translation components, then row-major jitter) so a seed fully
/// determines the result.
pub fn augment_features(features: &mut Array2<f64>, config: &AugmentConfig, rng: &mut ChaCha8Rng) {
    if !config.enabled {
        return;
    }
    let angle = rng
        .random_range(-config.max_rotation_deg..=config.max_rotation_deg)
        .to_radians();
    let (sin, cos) = angle.sin_cos();
    let t = [
        rng.random_range(-config.max_translation..=config.max_translation),
        rng.random_range(-config.max_translation..=config.max_translation),
        rng.random_range(-config.max_translation..=config.max_translation),
    ];
    let jitter = Normal::new(0.0, config.jitter_sigma).expect("sigma validated non-negative");

    for mut row in features.rows_mut() {
        let (x, y) = (row[0], row[1]);
        row[0] = cos * x - sin * y;
        row[1] = sin * x + cos * y;
        let (nx, ny) = (row[3], row[4]);
        row[3] = cos * nx - sin * ny;
        row[4] = sin * nx + cos * ny;
        for axis in 0..3 {
            row[axis] += t[axis];
            if config.jitter_sigma > 0.0 {
                row[axis] += jitter.sample(rng);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    fn cloud(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Array::from_shape_fn((n, 8), |_| rng.random_range(-1.0f64..1.0));
        // Normalize the normal columns so unit length is testable.
        for mut row in m.rows_mut() {
            let norm = (row[3] * row[3] + row[4] * row[4] + row[5] * row[5]).sqrt();
            for c in 3..6 {
                row[c] /= norm;
            }
        }
        m
    }

    #[test]
    fn disabled_is_identity() {
        let mut m = cloud(16, 1);
        let orig = m.clone();
        let cfg = AugmentConfig {
            enabled: false,
            ..AugmentConfig::default()
        };
        augment_features(&mut m, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(m, orig);
    }

    #[test]
    fn same_seed_same_result() {
        let cfg = AugmentConfig::default();
        let mut a = cloud(16, 2);
        let mut b = a.clone();
        augment_features(&mut a, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        augment_features(&mut b, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        let mut c = cloud(16, 2);
        augment_features(&mut c, &cfg, &mut ChaCha8Rng::seed_from_u64(10));
        assert_ne!(a, c);
    }

    #[test]
    fn curvature_columns_never_move() {
        let cfg = AugmentConfig::default();
        let mut m = cloud(32, 3);
        let orig = m.clone();
        augment_features(&mut m, &cfg, &mut ChaCha8Rng::seed_from_u64(4));
        for i in 0..32 {
            assert_eq!(m[[i, 6]], orig[[i, 6]]);
            assert_eq!(m[[i, 7]], orig[[i, 7]]);
        }
    }

    #[test]
    fn rotation_preserves_normal_length_and_z() {
        let cfg = AugmentConfig {
            enabled: true,
            max_rotation_deg: 30.0,
            max_translation: 0.0,
            jitter_sigma: 0.0,
        };
        let mut m = cloud(32, 5);
        let orig = m.clone();
        augment_features(&mut m, &cfg, &mut ChaCha8Rng::seed_from_u64(6));
        for i in 0..32 {
            let len = (m[[i, 3]].powi(2) + m[[i, 4]].powi(2) + m[[i, 5]].powi(2)).sqrt();
            assert!((len - 1.0).abs() < 1e-12);
            // A z-rotation leaves z components alone.
            assert_eq!(m[[i, 2]], orig[[i, 2]]);
            assert_eq!(m[[i, 5]], orig[[i, 5]]);
            // Planar radius is preserved.
            let r0 = (orig[[i, 0]].powi(2) + orig[[i, 1]].powi(2)).sqrt();
            let r1 = (m[[i, 0]].powi(2) + m[[i, 1]].powi(2)).sqrt();
            assert!((r0 - r1).abs() < 1e-12);
        }
    }
}
