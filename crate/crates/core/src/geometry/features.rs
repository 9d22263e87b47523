//! Assembly of the per-point network input features.
//!
//! Every face contributes one point (its centroid). Each row of the
//! feature matrix is [x, y, z, nx, ny, nz, gaussian, point]: coordinates
//! centered at the cloud centroid and isotropically scaled into [-1,1]^3,
//! unit normals straight from the mesh, Gaussian curvature clamped to
//! +-100 mm^-2 then divided by 100, point curvature divided by pi. The
//! unscaled curvature values (including mean curvature, which is not a
//! network input) ride along per row for hard-point ranking.

use ndarray::Array2;

use super::curvature::{gaussian_curvature, mean_curvature, point_curvature};
use crate::classes::Jaw;
use crate::mesh::{FaceAdjacency, TriMesh};

pub const FEATURE_DIM: usize = 8;

const GAUSSIAN_CLAMP: f64 = 100.0;

/// Point cloud with per-row features, provenance, and raw curvatures.
#[derive(Debug, Clone)]
pub struct FeatureCloud {
    features: Array2<f64>,
    jaw: Jaw,
    source_face: Vec<u32>,
    raw_gaussian: Vec<f64>,
    raw_point: Vec<f64>,
    raw_mean: Vec<f64>,
    padded: bool,
}

impl FeatureCloud {
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    /// N x 8 normalized feature matrix.
    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn jaw(&self) -> Jaw {
        self.jaw
    }

    /// One-hot jaw category vector (maxillary = [1,0]).
    pub fn category(&self) -> [f64; 2] {
        self.jaw.one_hot()
    }

    /// Original mesh face index for each row.
    pub fn source_face(&self) -> &[u32] {
        &self.source_face
    }

    /// Unscaled per-row Gaussian curvature (mm^-2).
    pub fn raw_gaussian(&self) -> &[f64] {
        &self.raw_gaussian
    }

    /// Unscaled per-row point curvature (radians).
    pub fn raw_point(&self) -> &[f64] {
        &self.raw_point
    }

    /// Unscaled per-row mean curvature (mm^-1).
    pub fn raw_mean(&self) -> &[f64] {
        &self.raw_mean
    }

    /// True when the cloud was padded by resampling because the mesh had
    /// fewer faces than the requested sample size.
    pub fn padded(&self) -> bool {
        self.padded
    }

    /// Rebuild a cloud from selected row indices (shared by the samplers).
    pub(crate) fn take_rows(&self, rows: &[usize], padded: bool) -> FeatureCloud {
        let mut features = Array2::zeros((rows.len(), FEATURE_DIM));
        for (out, &r) in rows.iter().enumerate() {
            features.row_mut(out).assign(&self.features.row(r));
        }
        FeatureCloud {
            features,
            jaw: self.jaw,
            source_face: rows.iter().map(|&r| self.source_face[r]).collect(),
            raw_gaussian: rows.iter().map(|&r| self.raw_gaussian[r]).collect(),
            raw_point: rows.iter().map(|&r| self.raw_point[r]).collect(),
            raw_mean: rows.iter().map(|&r| self.raw_mean[r]).collect(),
            padded: self.padded || padded,
        }
    }
}

/// Build the full-resolution feature cloud (one row per face).
pub fn build_features(mesh: &TriMesh, adj: &FaceAdjacency, jaw: Jaw) -> FeatureCloud {
    let n = mesh.face_count();
    let gaussian = gaussian_curvature(mesh);
    let point = point_curvature(mesh, adj);
    let mean = mean_curvature(mesh);

    // Center at the centroid of the point cloud, then scale by the largest
    // per-axis extent so every coordinate lands in [-1, 1].
    let mut center = nalgebra::Vector3::zeros();
    for c in mesh.centroids() {
        center += c.coords;
    }
    center /= n as f64;

    let mut extent = 0.0f64;
    for axis in 0..3 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in mesh.centroids() {
            lo = lo.min(c.coords[axis]);
            hi = hi.max(c.coords[axis]);
        }
        extent = extent.max(hi - lo);
    }
    let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };

    let mut features = Array2::zeros((n, FEATURE_DIM));
    for f in 0..n {
        let p = (mesh.centroid(f).coords - center) * scale;
        let normal = mesh.normal(f);
        let g = gaussian.values[f].clamp(-GAUSSIAN_CLAMP, GAUSSIAN_CLAMP) / GAUSSIAN_CLAMP;
        let m = point.values[f] / std::f64::consts::PI;
        let row = [p.x, p.y, p.z, normal.x, normal.y, normal.z, g, m];
        for (c, &v) in row.iter().enumerate() {
            features[[f, c]] = v;
        }
    }

    FeatureCloud {
        features,
        jaw,
        source_face: (0..n as u32).collect(),
        raw_gaussian: gaussian.values,
        raw_point: point.values,
        raw_mean: mean.values,
        padded: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use approx::assert_relative_eq;

    #[test]
    fn shape_and_column_semantics() {
        let mesh = primitives::icosphere(3.0, 2);
        let adj = FaceAdjacency::build(&mesh);
        let cloud = build_features(&mesh, &adj, Jaw::Maxillary);
        assert_eq!(cloud.n(), mesh.face_count());
        assert_eq!(cloud.features().ncols(), FEATURE_DIM);
        assert_eq!(cloud.category(), [1.0, 0.0]);

        // Coordinates centered: per-axis means vanish.
        for axis in 0..3 {
            let mean: f64 =
                cloud.features().column(axis).sum() / cloud.n() as f64;
            assert!(mean.abs() < 1e-9, "axis {axis} mean {mean}");
        }
        // Coordinates live in [-1, 1] and normals stay unit length.
        for row in cloud.features().rows() {
            for axis in 0..3 {
                assert!(row[axis].abs() <= 1.0 + 1e-12);
            }
            let n = (row[3] * row[3] + row[4] * row[4] + row[5] * row[5]).sqrt();
            assert_relative_eq!(n, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn curvature_columns_match_standalone_fields() {
        let mesh = primitives::icosphere(1.0, 2);
        let adj = FaceAdjacency::build(&mesh);
        let cloud = build_features(&mesh, &adj, Jaw::Mandible);
        let gaussian = gaussian_curvature(&mesh);
        let point = point_curvature(&mesh, &adj);
        for f in 0..cloud.n() {
            let g = gaussian.values[f].clamp(-100.0, 100.0) / 100.0;
            let m = point.values[f] / std::f64::consts::PI;
            assert_eq!(cloud.features()[[f, 6]], g);
            assert_eq!(cloud.features()[[f, 7]], m);
            assert_eq!(cloud.raw_gaussian()[f], gaussian.values[f]);
            assert_eq!(cloud.raw_point()[f], point.values[f]);
        }
        assert_eq!(cloud.category(), [0.0, 1.0]);
    }

    #[test]
    fn source_faces_are_identity_at_full_resolution() {
        let mesh = primitives::tetrahedron(1.0);
        let adj = FaceAdjacency::build(&mesh);
        let cloud = build_features(&mesh, &adj, Jaw::Maxillary);
        assert_eq!(cloud.source_face(), &[0, 1, 2, 3]);
        assert!(!cloud.padded());
    }
}
