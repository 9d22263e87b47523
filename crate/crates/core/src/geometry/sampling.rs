//! Fixed-size sampling of feature clouds.
//!
//! The default sampler draws rows uniformly without replacement under a
//! fixed seed. Clouds smaller than the requested size keep every row and
//! are padded by resampling with replacement (flagged on the result).
//! Farthest-point sampling is available as an alternative for callers
//! that want better spatial coverage at O(n * N) cost.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::features::FeatureCloud;
use super::GeometryError;

/// Uniform random sample of exactly `n` rows, deterministic in `seed`.
pub fn downsample(cloud: &FeatureCloud, n: usize, seed: u64) -> Result<FeatureCloud, GeometryError> {
    if n == 0 {
        return Err(GeometryError::ZeroSample);
    }
    let total = cloud.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if n <= total {
        let rows = rand::seq::index::sample(&mut rng, total, n).into_vec();
        Ok(cloud.take_rows(&rows, false))
    } else {
        let mut rows: Vec<usize> = (0..total).collect();
        rows.extend((total..n).map(|_| rng.random_range(0..total)));
        Ok(cloud.take_rows(&rows, true))
    }
}

/// Farthest-point sample of exactly `n` rows on the coordinate columns.
/// The first point is drawn uniformly under `seed`; each subsequent pick
/// maximizes the minimum distance to the already-selected set.
pub fn downsample_fps(
    cloud: &FeatureCloud,
    n: usize,
    seed: u64,
) -> Result<FeatureCloud, GeometryError> {
    if n == 0 {
        return Err(GeometryError::ZeroSample);
    }
    let total = cloud.n();
    if n >= total {
        // Nothing to spread out; fall back to the uniform sampler's
        // keep-everything-and-pad behavior.
        return downsample(cloud, n, seed);
    }

    let coords = cloud.features().slice(ndarray::s![.., ..3]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = Vec::with_capacity(n);
    let mut min_dist = vec![f64::INFINITY; total];

    let mut current = rng.random_range(0..total);
    selected.push(current);
    for _ in 1..n {
        let c = coords.row(current);
        let mut best = (0usize, f64::NEG_INFINITY);
        for r in 0..total {
            let row = coords.row(r);
            let d = (row[0] - c[0]).powi(2) + (row[1] - c[1]).powi(2) + (row[2] - c[2]).powi(2);
            if d < min_dist[r] {
                min_dist[r] = d;
            }
            if min_dist[r] > best.1 {
                best = (r, min_dist[r]);
            }
        }
        current = best.0;
        selected.push(current);
        min_dist[current] = 0.0;
    }

    Ok(cloud.take_rows(&selected, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::Jaw;
    use crate::geometry::build_features;
    use crate::mesh::{primitives, FaceAdjacency};

    fn sphere_cloud() -> FeatureCloud {
        let mesh = primitives::icosphere(1.0, 3);
        let adj = FaceAdjacency::build(&mesh);
        build_features(&mesh, &adj, Jaw::Maxillary)
    }

    #[test]
    fn sample_is_distinct_and_deterministic() {
        let cloud = sphere_cloud();
        let a = downsample(&cloud, 100, 7).unwrap();
        let b = downsample(&cloud, 100, 7).unwrap();
        assert_eq!(a.n(), 100);
        assert_eq!(a.source_face(), b.source_face());
        assert_eq!(a.features(), b.features());

        let mut faces = a.source_face().to_vec();
        faces.sort_unstable();
        faces.dedup();
        assert_eq!(faces.len(), 100, "sampling must be without replacement");

        let c = downsample(&cloud, 100, 8).unwrap();
        assert_ne!(a.source_face(), c.source_face());
    }

    #[test]
    fn rows_keep_their_feature_pairing() {
        let cloud = sphere_cloud();
        let sampled = downsample(&cloud, 64, 3).unwrap();
        for (row, &face) in sampled.source_face().iter().enumerate() {
            let original = cloud
                .source_face()
                .iter()
                .position(|&f| f == face)
                .unwrap();
            assert_eq!(
                sampled.features().row(row),
                cloud.features().row(original)
            );
            assert_eq!(sampled.raw_point()[row], cloud.raw_point()[original]);
            assert_eq!(sampled.raw_gaussian()[row], cloud.raw_gaussian()[original]);
        }
    }

    #[test]
    fn oversampling_pads_with_replacement() {
        let mesh = primitives::tetrahedron(1.0);
        let adj = FaceAdjacency::build(&mesh);
        let cloud = build_features(&mesh, &adj, Jaw::Mandible);
        let padded = downsample(&cloud, 10, 1).unwrap();
        assert_eq!(padded.n(), 10);
        assert!(padded.padded());
        // Every original face stays present.
        for f in 0..4u32 {
            assert!(padded.source_face().contains(&f));
        }
    }

    #[test]
    fn zero_sample_rejected() {
        let cloud = sphere_cloud();
        assert!(downsample(&cloud, 0, 1).is_err());
        assert!(downsample_fps(&cloud, 0, 1).is_err());
    }

    #[test]
    fn fps_spreads_points() {
        let cloud = sphere_cloud();
        let n = 32;
        let fps = downsample_fps(&cloud, n, 5).unwrap();
        assert_eq!(fps.n(), n);
        let mut faces = fps.source_face().to_vec();
        faces.sort_unstable();
        faces.dedup();
        assert_eq!(faces.len(), n);

        // Compare nearest-neighbor spacing against a uniform sample: FPS
        // should never be worse.
        let spread = |c: &FeatureCloud| {
            let coords = c.features();
            let mut min_d = f64::INFINITY;
            for i in 0..c.n() {
                for j in (i + 1)..c.n() {
                    let d: f64 = (0..3)
                        .map(|a| (coords[[i, a]] - coords[[j, a]]).powi(2))
                        .sum();
                    min_d = min_d.min(d);
                }
            }
            min_d
        };
        let uniform = downsample(&cloud, n, 5).unwrap();
        assert!(spread(&fps) >= spread(&uniform));
    }
}
