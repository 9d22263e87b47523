//! Per-face geometric signals and the network input features.
//!
//! Three discrete curvatures are computed on the mesh: Gaussian curvature
//! (per-vertex angle deficit over barycentric area), mean curvature
//! (cotangent-Laplacian magnitude), and a normal-deviation "point
//! curvature" which averages the angle between a face normal and its
//! 2-hop neighbors' normals. The feature builder assembles the N x 8
//! input matrix [x, y, z, nx, ny, nz, gaussian, point] with normalized
//! coordinates, and the sampler cuts it to a fixed point count.

mod curvature;
mod features;
mod sampling;

pub use curvature::{
    angle_deficits, gaussian_curvature, mean_curvature, point_curvature, point_curvature_knn,
    AngleDeficits, CurvatureField, CurvatureKind,
};
pub use features::{build_features, FeatureCloud, FEATURE_DIM};
pub use sampling::{downsample, downsample_fps};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("sample size must be positive")]
    ZeroSample,
}
