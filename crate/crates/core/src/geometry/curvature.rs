//! Discrete curvature estimators.
//!
//! All three estimators return one scalar per face. Gaussian and mean
//! curvature are classical per-vertex discretizations averaged onto the
//! incident faces; point curvature is defined directly on faces as the
//! mean angle in radians between a face normal and the normals of its
//! neighborhood, so it is large exactly where the surface creases.

use rayon::prelude::*;

use crate::mesh::{corner_angle, FaceAdjacency, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureKind {
    /// Angle-deficit Gaussian curvature, mm^-2.
    Gaussian,
    /// Cotangent-Laplacian mean-curvature magnitude, mm^-1.
    Mean,
    /// Mean normal deviation over the neighborhood, radians in [0, pi].
    Point,
}

/// Per-face scalar field produced by one of the curvature estimators.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    pub kind: CurvatureKind,
    /// One value per face, aligned with the mesh face order.
    pub values: Vec<f64>,
    /// Vertices on an open boundary (only populated by estimators that
    /// treat them specially; empty for point curvature).
    pub boundary_vertices: Vec<u32>,
}

/// Mean angle between each face normal and its 2-hop neighbors' normals.
///
/// Faces with an empty neighborhood (isolated faces) get 0.
pub fn point_curvature(mesh: &TriMesh, adj: &FaceAdjacency) -> CurvatureField {
    let values: Vec<f64> = (0..mesh.face_count())
        .into_par_iter()
        .map(|f| mean_normal_angle(f, adj.second_order(f), mesh))
        .collect();
    debug_assert!(values.iter().all(|v| v.is_finite()));
    CurvatureField {
        kind: CurvatureKind::Point,
        values,
        boundary_vertices: Vec::new(),
    }
}

/// Point curvature over k nearest faces in centroid space instead of the
/// mesh 2-hop neighborhood. Alternative mode for meshes whose connectivity
/// is unreliable; quadratic in the face count.
pub fn point_curvature_knn(mesh: &TriMesh, k: usize) -> CurvatureField {
    let n = mesh.face_count();
    let centroids = mesh.centroids();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|f| {
            let mut dist: Vec<(f64, u32)> = (0..n)
                .filter(|&g| g != f)
                .map(|g| ((centroids[g] - centroids[f]).norm_squared(), g as u32))
                .collect();
            let k = k.min(dist.len());
            if k == 0 {
                return 0.0;
            }
            dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
            let neighbors: Vec<u32> = dist[..k].iter().map(|&(_, g)| g).collect();
            mean_normal_angle(f, &neighbors, mesh)
        })
        .collect();
    CurvatureField {
        kind: CurvatureKind::Point,
        values,
        boundary_vertices: Vec::new(),
    }
}

fn mean_normal_angle(f: usize, neighbors: &[u32], mesh: &TriMesh) -> f64 {
    if neighbors.is_empty() {
        return 0.0;
    }
    let n_i = mesh.normal(f);
    let sum: f64 = neighbors
        .iter()
        .map(|&g| n_i.dot(&mesh.normal(g as usize)).clamp(-1.0, 1.0).acos())
        .sum();
    sum / neighbors.len() as f64
}

/// Per-vertex raw angle deficits with boundary handling, plus the
/// barycentric vertex areas needed to turn deficits into curvature.
#[derive(Debug, Clone)]
pub struct AngleDeficits {
    /// 2*pi - sum of incident angles for interior vertices, pi - sum for
    /// boundary vertices.
    pub deficit: Vec<f64>,
    pub is_boundary: Vec<bool>,
    /// One third of the total incident face area.
    pub vertex_area: Vec<f64>,
}

impl AngleDeficits {
    /// Sum of raw deficits over interior vertices; equals 4*pi*(1 - genus)
    /// on a closed mesh (discrete Gauss-Bonnet).
    pub fn total_deficit(&self) -> f64 {
        self.deficit.iter().sum()
    }
}

/// Angle sums, boundary flags and barycentric areas for every vertex.
pub fn angle_deficits(mesh: &TriMesh) -> AngleDeficits {
    use std::collections::HashMap;

    let nv = mesh.vertex_count();
    let mut angle_sum = vec![0.0f64; nv];
    let mut vertex_area = vec![0.0f64; nv];

    for f in 0..mesh.face_count() {
        let idx = mesh.face(f);
        let p = mesh.face_points(f);
        let third = mesh.area(f) / 3.0;
        for k in 0..3 {
            let v = idx[k] as usize;
            angle_sum[v] += corner_angle(p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            vertex_area[v] += third;
        }
    }

    // A vertex is on the boundary if any incident edge belongs to exactly
    // one face.
    let mut edge_count: HashMap<(u32, u32), u32> = HashMap::new();
    for idx in mesh.faces() {
        for k in 0..3 {
            let a = idx[k];
            let b = idx[(k + 1) % 3];
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut is_boundary = vec![false; nv];
    for (&(a, b), &count) in &edge_count {
        if count == 1 {
            is_boundary[a as usize] = true;
            is_boundary[b as usize] = true;
        }
    }

    let deficit = (0..nv)
        .map(|v| {
            let full = if is_boundary[v] {
                std::f64::consts::PI
            } else {
                std::f64::consts::TAU
            };
            full - angle_sum[v]
        })
        .collect();

    AngleDeficits {
        deficit,
        is_boundary,
        vertex_area,
    }
}

/// Angle-deficit Gaussian curvature per vertex, averaged onto faces.
pub fn gaussian_curvature(mesh: &TriMesh) -> CurvatureField {
    let deficits = angle_deficits(mesh);
    let per_vertex: Vec<f64> = deficits
        .deficit
        .iter()
        .zip(&deficits.vertex_area)
        .map(|(&d, &a)| if a > 0.0 { d / a } else { 0.0 })
        .collect();

    let values = face_average(mesh, &per_vertex);
    let boundary_vertices = deficits
        .is_boundary
        .iter()
        .enumerate()
        .filter_map(|(v, &b)| b.then_some(v as u32))
        .collect();

    CurvatureField {
        kind: CurvatureKind::Gaussian,
        values,
        boundary_vertices,
    }
}

/// Cotangent weights on near-degenerate triangles explode; the magnitude
/// is held in this range (sign preserved so obtuse triangles keep their
/// negative weights).
const COT_CLAMP: (f64, f64) = (1e-6, 1e6);

/// Cotangent-Laplacian mean-curvature magnitude per vertex, averaged onto
/// faces. Magnitude only: the field is used for ranking, where the sign of
/// the bending direction is irrelevant.
pub fn mean_curvature(mesh: &TriMesh) -> CurvatureField {
    let nv = mesh.vertex_count();
    let mut lap = vec![nalgebra::Vector3::<f64>::zeros(); nv];
    let deficits = angle_deficits(mesh);

    for f in 0..mesh.face_count() {
        let idx = mesh.face(f);
        let p = mesh.face_points(f);
        for k in 0..3 {
            // The angle at corner k faces the edge (k+1, k+2).
            let cot = cotangent(p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let w = cot.signum() * cot.abs().clamp(COT_CLAMP.0, COT_CLAMP.1);
            let a = idx[(k + 1) % 3] as usize;
            let b = idx[(k + 2) % 3] as usize;
            let d = p[(k + 2) % 3] - p[(k + 1) % 3];
            lap[a] += w * d;
            lap[b] -= w * d;
        }
    }

    let per_vertex: Vec<f64> = (0..nv)
        .map(|v| {
            let area = deficits.vertex_area[v];
            if area > 0.0 {
                lap[v].norm() / (4.0 * area)
            } else {
                0.0
            }
        })
        .collect();

    let boundary_vertices = deficits
        .is_boundary
        .iter()
        .enumerate()
        .filter_map(|(v, &b)| b.then_some(v as u32))
        .collect();

    CurvatureField {
        kind: CurvatureKind::Mean,
        values: face_average(mesh, &per_vertex),
        boundary_vertices,
    }
}

/// Cotangent of the angle at `at` in triangle (at, b, c).
fn cotangent(at: nalgebra::Point3<f64>, b: nalgebra::Point3<f64>, c: nalgebra::Point3<f64>) -> f64 {
    let u = b - at;
    let v = c - at;
    let cross = u.cross(&v).norm();
    if cross == 0.0 {
        return COT_CLAMP.1;
    }
    u.dot(&v) / cross
}

fn face_average(mesh: &TriMesh, per_vertex: &[f64]) -> Vec<f64> {
    mesh.faces()
        .iter()
        .map(|idx| {
            (per_vertex[idx[0] as usize] + per_vertex[idx[1] as usize] + per_vertex[idx[2] as usize])
                / 3.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn interior_faces(mesh: &TriMesh, boundary: &[bool]) -> Vec<usize> {
        (0..mesh.face_count())
            .filter(|&f| mesh.face(f).iter().all(|&v| !boundary[v as usize]))
            .collect()
    }

    #[test]
    fn flat_grid_point_curvature_is_zero() {
        let mesh = primitives::planar_grid(5, 5, 1.0);
        let adj = FaceAdjacency::build(&mesh);
        let field = point_curvature(&mesh, &adj);
        for &v in &field.values {
            assert!(v.abs() < 1e-12, "flat mesh should have zero point curvature");
        }
    }

    #[test]
    fn folded_pair_subtends_quarter_turn() {
        // Two triangles sharing edge (0,1); the second is folded straight up
        // so the normals are 90 degrees apart.
        let mesh = TriMesh::new(
            vec![
                nalgebra::Point3::new(0.0, 0.0, 0.0),
                nalgebra::Point3::new(1.0, 0.0, 0.0),
                nalgebra::Point3::new(0.5, 1.0, 0.0),
                nalgebra::Point3::new(0.5, 0.0, 1.0),
            ],
            vec![[0, 1, 2], [1, 0, 3]],
        )
        .unwrap();
        let adj = FaceAdjacency::build(&mesh);
        let field = point_curvature(&mesh, &adj);
        assert_relative_eq!(field.values[0], PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(field.values[1], PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn point_curvature_matches_brute_force_on_icosphere() {
        let mesh = primitives::icosphere(1.0, 2);
        let adj = FaceAdjacency::build(&mesh);
        let field = point_curvature(&mesh, &adj);
        for f in 0..mesh.face_count() {
            let neighbors = adj.second_order(f);
            let expected: f64 = neighbors
                .iter()
                .map(|&g| {
                    mesh.normal(f)
                        .dot(&mesh.normal(g as usize))
                        .clamp(-1.0, 1.0)
                        .acos()
                })
                .sum::<f64>()
                / neighbors.len() as f64;
            assert_relative_eq!(field.values[f], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn point_curvature_knn_two_far_faces() {
        // Isolated pair: each face's single nearest neighbor is the other.
        let mesh = TriMesh::new(
            vec![
                nalgebra::Point3::new(0.0, 0.0, 0.0),
                nalgebra::Point3::new(1.0, 0.0, 0.0),
                nalgebra::Point3::new(0.5, 1.0, 0.0),
                nalgebra::Point3::new(5.0, 0.0, 0.0),
                nalgebra::Point3::new(6.0, 0.0, 0.0),
                nalgebra::Point3::new(5.5, 0.0, 1.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let field = point_curvature_knn(&mesh, 1);
        // First normal is +z, second is -y: right angle.
        assert_relative_eq!(field.values[0], PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(field.values[1], PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn gauss_bonnet_on_closed_meshes() {
        for mesh in [
            primitives::tetrahedron(1.0),
            primitives::icosphere(1.0, 0),
            primitives::icosphere(3.0, 2),
        ] {
            let deficits = angle_deficits(&mesh);
            assert!(deficits.is_boundary.iter().all(|&b| !b));
            assert_relative_eq!(deficits.total_deficit(), 4.0 * PI, epsilon = 1e-9);
        }
    }

    #[test]
    fn unit_icosphere_gaussian_near_one() {
        let mesh = primitives::icosphere(1.0, 3);
        let field = gaussian_curvature(&mesh);
        let mean = field.values.iter().sum::<f64>() / field.values.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean K = {mean}");
    }

    #[test]
    fn flat_grid_gaussian_zero_inside() {
        let mesh = primitives::planar_grid(6, 6, 1.0);
        let field = gaussian_curvature(&mesh);
        let deficits = angle_deficits(&mesh);
        for f in interior_faces(&mesh, &deficits.is_boundary) {
            assert!(field.values[f].abs() < 1e-12);
        }
        assert!(!field.boundary_vertices.is_empty());
    }

    #[test]
    fn mean_curvature_matches_inverse_radius() {
        for (radius, subdivisions) in [(1.0, 3), (2.0, 3)] {
            let mesh = primitives::icosphere(radius, subdivisions);
            let field = mean_curvature(&mesh);
            let mean = field.values.iter().sum::<f64>() / field.values.len() as f64;
            let expected = 1.0 / radius;
            assert!(
                (mean - expected).abs() < 0.1 * expected,
                "radius {radius}: mean H = {mean}, expected ~{expected}"
            );
        }
    }

    #[test]
    fn flat_grid_mean_curvature_zero_inside() {
        let mesh = primitives::planar_grid(6, 6, 1.0);
        let field = mean_curvature(&mesh);
        let deficits = angle_deficits(&mesh);
        for f in interior_faces(&mesh, &deficits.is_boundary) {
            assert!(field.values[f].abs() < 1e-9, "face {f}: {}", field.values[f]);
        }
    }

    #[test]
    fn point_curvature_rigid_invariance() {
        let mesh = primitives::icosphere(1.0, 2);
        let adj = FaceAdjacency::build(&mesh);
        let base = point_curvature(&mesh, &adj);

        let rot = nalgebra::Rotation3::from_euler_angles(0.7, -1.2, 0.4);
        let rotated = mesh.map_vertices(|p| rot * p).unwrap();
        let rot_field = point_curvature(&rotated, &FaceAdjacency::build(&rotated));
        for (a, b) in base.values.iter().zip(&rot_field.values) {
            assert!((a - b).abs() < 1e-9);
        }

        // Power-of-two scale: every float op picks up the same exponent
        // shift, so the normals and therefore m_i are bit-identical.
        let scaled = mesh
            .map_vertices(|p| nalgebra::Point3::from(p.coords * 2.0))
            .unwrap();
        let scale_field = point_curvature(&scaled, &FaceAdjacency::build(&scaled));
        assert_eq!(base.values, scale_field.values);
    }
}
